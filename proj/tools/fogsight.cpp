// fogsight: transforms, fog synthesis, training, evaluation and checks.
// Every subcommand exits 0 on full success, 1 on any failure, and eval
// exits 2 when --min-miou is not met.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fogsight/app.hpp"

namespace app = fogsight::app;

namespace {

struct ConfigFlags {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "override one key, e.g. --set train.steps=400")->take_all();
  }

  // defaults < file < FOGSIGHT_SEED < --set
  app::RunConfig resolve() const {
    auto cfg = app::RunConfig::defaults();
    if (!file.empty()) cfg.load_file(file);
    cfg.apply_environment();
    for (const auto& o : overrides) cfg.apply_override(o);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Segmentation of foggy street scenes"};
  cli.require_subcommand(1);
  int code = 0;

  // transform
  app::TransformRequest tr;
  std::string tr_depth, tr_decode = "disparity256";
  auto* transform = cli.add_subcommand("transform", "colour transforms or fog for one image or a directory");
  transform->add_option("--in", tr.in, "input PNG or directory")->required();
  transform->add_option("--out", tr.out, "output PNG or directory")->required();
  transform->add_option("--transform", tr.transform, "iit | iab | ihs | luminance | fog")->required();
  transform->add_option("--alpha", tr.alpha, "invariant camera parameter")->capture_default_str();
  transform->add_option("--depth", tr_depth, "depth PNG or directory (fog)");
  transform->add_option("--beta", tr.fog.beta, "attenuation per metre (fog)")->capture_default_str();
  transform->add_option("--atmo", tr.fog.atmospheric_light, "atmospheric light (fog)")->capture_default_str();
  transform->add_option("--depth-decode", tr_decode, "disparity256 | meters16")->capture_default_str();
  transform->callback([&] {
    if (!tr_depth.empty()) tr.depth = tr_depth;
    tr.depth_decode = fogsight::imaging::parse_depth_decode(tr_decode);
    code = app::cmd_transform(tr, std::cout, std::cerr);
  });

  // fog
  app::FogRequest fr;
  std::string fr_decode = "disparity256";
  auto* fog = cli.add_subcommand("fog", "synthetic fog at one or more densities");
  fog->add_option("--in", fr.in, "input PNG or directory")->required();
  fog->add_option("--depth", fr.depth, "depth PNG or directory with matching names")->required();
  fog->add_option("--out", fr.out, "output directory")->required();
  fog->add_option("--beta", fr.betas, "attenuation per metre; several give one directory each")
      ->required()
      ->take_all();
  fog->add_option("--atmo", fr.atmospheric_light, "atmospheric light")->capture_default_str();
  fog->add_option("--depth-decode", fr_decode, "disparity256 | meters16")->capture_default_str();
  fog->callback([&] {
    fr.depth_decode = fogsight::imaging::parse_depth_decode(fr_decode);
    code = app::cmd_fog(fr, std::cout, std::cerr);
  });

  // train
  ConfigFlags train_cfg;
  app::TrainRequest train_req;
  std::string resume;
  auto* train = cli.add_subcommand("train", "train the segmentation network");
  train_cfg.attach(train);
  train->add_option("--out", train_req.out, "run directory")->required();
  train->add_option("--resume", resume, "checkpoint or run directory to continue from");
  train->callback([&] {
    if (!resume.empty()) train_req.resume = resume;
    const auto summary = app::run_training(train_cfg.resolve(), train_req, std::cout);
    std::cout << "done: " << summary.steps << " steps, final loss " << summary.final_loss << "\n";
  });

  // eval
  ConfigFlags eval_cfg;
  app::EvalRequest eval_req;
  std::string ckpt, pred_out;
  std::optional<double> min_miou;
  auto* eval = cli.add_subcommand("eval", "score a checkpoint on the evaluation set");
  eval_cfg.attach(eval);
  eval->add_option("--ckpt", ckpt, "checkpoint file");
  eval->add_option("--out", eval_req.out, "directory for metrics.txt and metrics.csv")->required();
  eval->add_option("--pred-out", pred_out, "directory for colourised predictions");
  eval->add_option("--min-miou", min_miou, "exit 2 when mean IoU is lower");
  eval->add_option("--predictor", eval_req.predictor, "model | oracle | constant:<class>")->capture_default_str();
  eval->callback([&] {
    if (!ckpt.empty()) eval_req.ckpt = ckpt;
    if (!pred_out.empty()) eval_req.pred_out = pred_out;
    eval_req.min_miou = min_miou;
    code = app::run_eval(eval_cfg.resolve(), eval_req, std::cout).exit_code;
  });

  // gan-train
  ConfigFlags gan_cfg;
  std::string gan_out;
  auto* gan_train = cli.add_subcommand("gan-train", "train the toy fog-to-clear generator");
  gan_cfg.attach(gan_train);
  gan_train->add_option("--out", gan_out, "output directory")->required();
  gan_train->callback([&] { code = app::cmd_gan_train(gan_cfg.resolve(), gan_out, std::cout, std::cerr); });

  // translate
  app::TranslateRequest tl;
  auto* translate = cli.add_subcommand("translate", "apply a trained generator to images");
  translate->add_option("--in", tl.in, "input PNG or directory")->required();
  translate->add_option("--out", tl.out, "output PNG or directory")->required();
  translate->add_option("--ckpt", tl.ckpt, "generator checkpoint")->required()->check(CLI::ExistingFile);
  translate->callback([&] { code = app::cmd_translate(tl, std::cout, std::cerr); });

  // gradcheck
  std::string scope = "all";
  bool inject = false;
  auto* gradcheck = cli.add_subcommand("gradcheck", "finite-difference check of every primitive");
  gradcheck->add_option("--scope", scope, "all or one primitive")->capture_default_str();
  gradcheck->add_flag("--inject-fault", inject)->group("");
  gradcheck->callback([&] { code = app::cmd_gradcheck(scope, inject, std::cout, std::cerr); });

  // stats
  ConfigFlags stats_cfg;
  std::string stats_csv;
  auto* stats = cli.add_subcommand("stats", "class frequencies and loss weights of the training set");
  stats_cfg.attach(stats);
  stats->add_option("--csv", stats_csv, "also write the table as CSV");
  stats->callback([&] {
    code = app::cmd_stats(stats_cfg.resolve(),
                          stats_csv.empty() ? std::nullopt : std::optional<app::fs::path>(stats_csv), std::cout);
  });

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return code;
}
