#include "boolattn/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace boolattn {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(trim(item)));
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

}  // namespace

EncoderConfig RunConfig::encoder_config(int vocab_size, bool use_boolattn) const {
  EncoderConfig e;
  e.vocab_size = vocab_size;
  e.d_h = d_h;
  e.layers = layers;
  e.heads = heads;
  e.head_dim = head_dim;
  e.max_len = max_len;
  e.d_ffn = d_ffn;
  e.d_o = d_o;
  e.conv_kernel = conv_kernel;
  e.conv_channels = conv_channels;
  e.bias_hidden = bias_hidden;
  e.gate_hidden = gate_hidden;
  e.window = window;
  e.gumbel_temperature = static_cast<float>(gumbel_temperature);
  e.gate_temperature = static_cast<float>(gate_temperature);
  e.theta_init = static_cast<float>(theta_init);
  e.sigma_init = static_cast<float>(sigma_init);
  e.use_boolattn = use_boolattn;
  return e;
}

void RunConfig::apply(const std::string& key, const std::string& value, int line) {
  auto fail = [&](const std::string& why) {
    std::string msg = "config: " + why + " for key '" + key + "'";
    if (line > 0) msg += " at line " + std::to_string(line);
    throw std::runtime_error(msg);
  };
  auto as_int = [&](int& field) {
    try {
      field = std::stoi(value);
    } catch (...) {
      fail("invalid integer '" + value + "'");
    }
  };
  auto as_double = [&](double& field) {
    try {
      field = std::stod(value);
    } catch (...) {
      fail("invalid number '" + value + "'");
    }
  };

  if (key == "d_h") as_int(d_h);
  else if (key == "layers") as_int(layers);
  else if (key == "heads") as_int(heads);
  else if (key == "head_dim") as_int(head_dim);
  else if (key == "max_len") as_int(max_len);
  else if (key == "d_ffn") as_int(d_ffn);
  else if (key == "d_o") as_int(d_o);
  else if (key == "conv_kernel") as_int(conv_kernel);
  else if (key == "conv_channels") as_int(conv_channels);
  else if (key == "bias_hidden") as_int(bias_hidden);
  else if (key == "gate_hidden") as_int(gate_hidden);
  else if (key == "window") as_int(window);
  else if (key == "gumbel_temperature") as_double(gumbel_temperature);
  else if (key == "gate_temperature") as_double(gate_temperature);
  else if (key == "theta_init") as_double(theta_init);
  else if (key == "sigma_init") as_double(sigma_init);
  else if (key == "num_docs") as_int(num_docs);
  else if (key == "num_queries") as_int(num_queries);
  else if (key == "num_attributes") as_int(num_attributes);
  else if (key == "min_doc_attrs") as_int(min_doc_attrs);
  else if (key == "max_doc_attrs") as_int(max_doc_attrs);
  else if (key == "max_query_len") as_int(max_query_len);
  else if (key == "max_doc_len") as_int(max_doc_len);
  else if (key == "pretrain_examples") as_int(pretrain_examples);
  else if (key == "pretrain_lr") as_double(pretrain_lr);
  else if (key == "pretrain_epochs") as_int(pretrain_epochs);
  else if (key == "pretrain_batch") as_int(pretrain_batch);
  else if (key == "triplet_margin") as_double(triplet_margin);
  else if (key == "triplet_alpha") as_double(triplet_alpha);
  else if (key == "augment_prob") as_double(augment_prob);
  else if (key == "train_lr") as_double(train_lr);
  else if (key == "weight_decay") as_double(weight_decay);
  else if (key == "batch_size") as_int(batch_size);
  else if (key == "epochs") as_int(epochs);
  else if (key == "negatives") as_int(negatives);
  else if (key == "val_fraction") as_double(val_fraction);
  else if (key == "recall_ks") {
    try {
      recall_ks = parse_int_list(value);
    } catch (...) {
      fail("invalid integer list '" + value + "'");
    }
  } else if (key == "seed") {
    try {
      seed = std::stoull(value);
    } catch (...) {
      fail("invalid seed '" + value + "'");
    }
  } else {
    fail("unknown key");
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: missing '=' at line " + std::to_string(line) + " in " +
                               path);
    apply(trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line);
  }
}

void RunConfig::apply_overrides(const std::vector<std::string>& key_values) {
  for (const auto& kv : key_values) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: override '" + kv + "' is not key=value");
    apply(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> m;
  auto put_i = [&](const char* k, long long v) { m[k] = std::to_string(v); };
  auto put_d = [&](const char* k, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    m[k] = os.str();
  };
  put_i("d_h", d_h);
  put_i("layers", layers);
  put_i("heads", heads);
  put_i("head_dim", head_dim);
  put_i("max_len", max_len);
  put_i("d_ffn", d_ffn);
  put_i("d_o", d_o);
  put_i("conv_kernel", conv_kernel);
  put_i("conv_channels", conv_channels);
  put_i("bias_hidden", bias_hidden);
  put_i("gate_hidden", gate_hidden);
  put_i("window", window);
  put_d("gumbel_temperature", gumbel_temperature);
  put_d("gate_temperature", gate_temperature);
  put_d("theta_init", theta_init);
  put_d("sigma_init", sigma_init);
  put_i("num_docs", num_docs);
  put_i("num_queries", num_queries);
  put_i("num_attributes", num_attributes);
  put_i("min_doc_attrs", min_doc_attrs);
  put_i("max_doc_attrs", max_doc_attrs);
  put_i("max_query_len", max_query_len);
  put_i("max_doc_len", max_doc_len);
  put_i("pretrain_examples", pretrain_examples);
  put_d("pretrain_lr", pretrain_lr);
  put_i("pretrain_epochs", pretrain_epochs);
  put_i("pretrain_batch", pretrain_batch);
  put_d("triplet_margin", triplet_margin);
  put_d("triplet_alpha", triplet_alpha);
  put_d("augment_prob", augment_prob);
  put_d("train_lr", train_lr);
  put_d("weight_decay", weight_decay);
  put_i("batch_size", batch_size);
  put_i("epochs", epochs);
  put_i("negatives", negatives);
  put_d("val_fraction", val_fraction);
  m["recall_ks"] = join_ints(recall_ks);
  put_i("seed", static_cast<long long>(seed));
  return m;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
  RunConfig cfg;
  for (const auto& [k, v] : kv) cfg.apply(k, v);
  return cfg;
}

}  // namespace boolattn
