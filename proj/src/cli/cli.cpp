// SPDX-License-Identifier: Apache-2.0
#include "dmesr/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <ostream>

#include "commands.hpp"

namespace dmesr {

namespace {

void error_line(std::ostream& err, const std::string& command, const std::string& reason) {
  nlohmann::ordered_json j;
  j["status"] = "error";
  j["command"] = command;
  j["reason"] = reason;
  err << j.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace dmesr::cli;
  CLI::App app{"Dual-view sequential recommendation", "dmesr"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string workdir = ".";
  app.add_option("--workdir", workdir, "Workspace root for raw/, datasets/, cache/, runs/ and reports/");

  FixtureOptions fx;
  auto* fixture = app.add_subcommand("fixture", "Write the synthetic cluster-walk interaction log");
  fixture->add_option("--name", fx.name, "Name under raw/")->capture_default_str();
  fixture->add_option("--users", fx.users)->capture_default_str();
  fixture->add_option("--items", fx.items)->capture_default_str();
  fixture->add_option("--clusters", fx.clusters)->capture_default_str();
  fixture->add_option("--min-len", fx.min_len)->capture_default_str();
  fixture->add_option("--max-len", fx.max_len)->capture_default_str();
  fixture->add_option("--skip", fx.skip, "Probability of a two-step move")->capture_default_str();
  fixture->add_option("--seed", fx.seed)->capture_default_str();

  PrepareOptions pr;
  auto* prepare = app.add_subcommand("prepare", "Filter, sequence and split an interaction log");
  prepare->add_option("--input", pr.input, "Interaction table (user, item, timestamp)")->required();
  prepare->add_option("--dataset", pr.dataset, "Name under datasets/")->required();
  prepare->add_option("--format", pr.format, "tsv or csv (default: from the extension)");
  prepare->add_flag("--header", pr.header, "The table has a header row");
  prepare->add_option("--user-column", pr.user_column)->capture_default_str();
  prepare->add_option("--item-column", pr.item_column)->capture_default_str();
  prepare->add_option("--time-column", pr.time_column)->capture_default_str();
  prepare->add_option("--min-user", pr.min_user, "Drop users with fewer interactions")->capture_default_str();
  prepare->add_option("--min-item", pr.min_item, "Drop items with fewer interactions")->capture_default_str();
  prepare->add_option("--max-len", pr.max_len, "Most recent items kept as model input")->capture_default_str();
  prepare->add_option("--catalog", pr.catalog, "Item catalog (JSON lines)");
  prepare->add_flag("--require-assets", pr.require_assets, "Drop items lacking text or an image");
  prepare->add_option("--negatives", pr.negatives, "Sampled negatives per evaluation instance")->capture_default_str();
  prepare->add_flag("--with-replacement", pr.with_replacement, "Sample negatives with replacement");
  prepare->add_option("--seed", pr.seed, "Negative sampling seed")->capture_default_str();

  EmbedOptions em;
  auto* embed = app.add_subcommand("embed", "Build the semantic embedding cache");
  embed->add_option("--dataset", em.dataset)->required();
  embed->add_option("--provider", em.provider, "synthetic, remote or structured")->capture_default_str();
  embed->add_option("--catalog", em.catalog, "Item catalog (JSON lines)");
  embed->add_option("--routes", em.routes)->capture_default_str();
  embed->add_option("--dimension", em.dimension)->capture_default_str();
  embed->add_option("--seed", em.seed)->capture_default_str();
  auto* force = embed->add_flag("--force", em.force, "Recompute records that are already cached");
  embed->add_flag("--resume", "Skip records that are already cached (the default)")->excludes(force);
  embed->add_option("--endpoint", em.endpoint)->capture_default_str();
  embed->add_option("--chat-model", em.chat_model);
  embed->add_option("--embedding-model", em.embedding_model);
  embed->add_option("--api-key-env", em.api_key_env)->capture_default_str();
  embed->add_option("--retries", em.retries, "Attempts per request")->capture_default_str();
  embed->add_option("--backoff-ms", em.backoff_ms)->capture_default_str();
  embed->add_option("--timeout", em.timeout_s, "Seconds per request")->capture_default_str();
  embed->add_option("--temperature", em.temperature);
  embed->add_option("--max-tokens", em.max_tokens);
  embed->add_option("--clusters", em.clusters, "Structured provider only")->capture_default_str();
  embed->add_option("--noise", em.noise, "Structured provider only")->capture_default_str();
  embed->add_option("--shared-noise", em.shared_noise, "Structured provider only")->capture_default_str();
  embed->add_option("--description-detail", em.description_detail, "Structured provider only")
      ->capture_default_str();

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train a model on a prepared dataset");
  train->add_option("--dataset", tr.dataset)->required();
  train->add_option("--config", tr.config, "key = value settings file");
  train->add_option("--cache", tr.cache, "Embedding cache fingerprint");
  train->add_option("--run", tr.run, "Name under runs/");
  train->add_option("--backbone", tr.backbone, "self_attention or recurrent");
  train->add_option("--ablate", tr.ablate, "Comma list: no_cl, no_twp, no_ori_view, no_ca");
  train->add_option("--item-source", tr.item_source, "semantic or id");
  train->add_option("--seed", tr.seed);
  train->add_option("--alpha", tr.alpha);
  train->add_option("--epochs", tr.epochs);

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Rank held-out targets with a trained checkpoint");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--split", ev.split, "valid or test")->capture_default_str();
  eval->add_flag("--tail-report", ev.tail_report, "Also report long-tail targets");
  eval->add_option("--head-fraction", ev.head_fraction)->capture_default_str();

  ReportOptions rp;
  auto* report = app.add_subcommand("report", "Aggregate evaluation reports into tables");
  report->add_option("--inputs", rp.inputs, "Evaluation directories or report.json files")->required();
  report->add_option("--name", rp.name, "Name under reports/")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  std::string command = args.empty() ? "" : args.front();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    error_line(err, command, e.what());
    return 2;
  }

  const auto subs = app.get_subcommands();
  command = subs.front()->get_name();
  try {
    const Workspace ws(workdir);
    if (command == "fixture") cmd_fixture(ws, fx, out);
    else if (command == "prepare") cmd_prepare(ws, pr, out);
    else if (command == "embed") cmd_embed(ws, em, out);
    else if (command == "train") cmd_train(ws, tr, out);
    else if (command == "eval") cmd_eval(ws, ev, out);
    else cmd_report(ws, rp, out);
  } catch (const std::exception& e) {
    error_line(err, command, e.what());
    return 1;
  }
  return 0;
}

}  // namespace dmesr
