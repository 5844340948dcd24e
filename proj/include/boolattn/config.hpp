#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "boolattn/encoder.hpp"

namespace boolattn {

/// Flat key=value run configuration. File values override defaults and
/// command-line flags override the file. Unknown keys are rejected.
struct RunConfig {
  // model
  int d_h = 64;
  int layers = 2;
  int heads = 4;
  int head_dim = 16;
  int max_len = 64;
  int d_ffn = 128;
  int d_o = 10;              // operator embedding dimension
  int conv_kernel = 3;       // scope conv window
  int conv_channels = 16;    // scope conv output channels
  int bias_hidden = 32;      // bias FFN hidden width
  int gate_hidden = 64;      // learned-gate FFN hidden width
  int window = 5;            // relative position window d
  double gumbel_temperature = 1.0;
  double gate_temperature = 0.1;
  double theta_init = 0.5;
  double sigma_init = 2.0;

  // corpus
  int num_docs = 500;
  int num_queries = 300;
  int num_attributes = 24;
  int min_doc_attrs = 3;
  int max_doc_attrs = 6;
  int max_query_len = 32;
  int max_doc_len = 64;

  // pretraining
  int pretrain_examples = 2000;
  double pretrain_lr = 1e-5;
  int pretrain_epochs = 1;
  int pretrain_batch = 1;
  double triplet_margin = 1.0;
  double triplet_alpha = 0.2;
  double augment_prob = 0.5;

  // fine-tuning
  double train_lr = 1e-3;  // desk-scale default; the reference setting is 5e-5
  double weight_decay = 0.01;
  int batch_size = 32;
  int epochs = 10;
  int negatives = 5;
  double val_fraction = 0.2;

  // evaluation
  std::vector<int> recall_ks = {1, 5, 10, 20, 50};

  std::uint64_t seed = 0;

  EncoderConfig encoder_config(int vocab_size, bool use_boolattn) const;

  /// Applies "key=value". Throws with the key name (and line if >0) on
  /// unknown keys or unparsable values.
  void apply(const std::string& key, const std::string& value, int line = 0);
  void load_file(const std::string& path);
  void apply_overrides(const std::vector<std::string>& key_values);

  std::map<std::string, std::string> to_map() const;
  static RunConfig from_map(const std::map<std::string, std::string>& kv);
};

}  // namespace boolattn
