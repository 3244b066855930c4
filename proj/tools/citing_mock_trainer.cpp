// Standalone trainer that honours the subprocess contract with the same
// outputs as the in-process mock backend.
#include <iostream>

#include <CLI11.hpp>

#include "citing/error.hpp"
#include "citing/trainer.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mock trainer backend", "citing_mock_trainer"};
  std::string train_file, base_model, out_dir;
  citing::TrainerHyperparams hp;
  std::uint64_t seed = 0;
  app.add_option("--train-file", train_file)->required();
  app.add_option("--base-model", base_model)->required();
  app.add_option("--out-dir", out_dir)->required();
  app.add_option("--seq-len", hp.sequence_length)->required();
  app.add_option("--epochs", hp.epochs)->required();
  app.add_option("--lr", hp.learning_rate)->required();
  app.add_option("--seed", seed)->required();
  CLI11_PARSE(app, argc, argv);
  try {
    citing::write_mock_training_outputs(train_file, base_model, out_dir, hp);
  } catch (const std::exception& e) {
    std::cerr << "citing_mock_trainer: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
