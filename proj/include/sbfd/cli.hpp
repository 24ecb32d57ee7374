#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "sbfd/baselines.hpp"
#include "sbfd/ddqn.hpp"
#include "sbfd/env.hpp"
#include "sbfd/eval.hpp"
#include "sbfd/forecaster.hpp"
#include "sbfd/kv_config.hpp"
#include "sbfd/traffic.hpp"

namespace sbfd::cli {

namespace fs = std::filesystem;

// 0 ok, 1 validation/usage, 2 I/O
inline int exit_code(const Error& e) { return e.kind() == ErrorKind::IoFailure ? 2 : 1; }

inline forecast::TrainConfig forecaster_config(const KeyValues& kv) {
  forecast::TrainConfig c;
  kv.maybe("forecaster.epochs", c.epochs);
  kv.maybe("forecaster.batch", c.batch_size);
  kv.maybe("forecaster.patience", c.patience);
  kv.maybe("forecaster.huber_delta", c.huber_delta);
  kv.maybe("forecaster.lr", c.adam.learning_rate);
  kv.maybe("forecaster.checkpoint_best", c.checkpoint_best);
  return c;
}

inline void warn_unused(const KeyValues& kv, std::ostream& err) {
  for (const auto& k : kv.unused()) err << "warning: config key '" << k << "' was not used by this command\n";
}

inline int cli_main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Predictive sub-band full-duplex scheduling toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "key=value override file");

  // generate
  auto* gen = app.add_subcommand("generate", "Sample a traffic trace from a Markov-modulated Poisson chain");
  std::string gen_out, gen_chain;
  std::size_t gen_slots = 100'000;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "trace CSV to write (hidden states go to <name>.states.csv)")->required();
  gen->add_option("--slots", gen_slots, "number of slots")->check(CLI::PositiveNumber);
  gen->add_option("--chain", gen_chain, "chain description (key=value)");
  gen->add_option("--seed", gen_seed, "random seed");

  // train-forecaster
  auto* tf = app.add_subcommand("train-forecaster", "Train the CNN-BiLSTM demand forecaster");
  std::string tf_data, tf_out, tf_history, tf_scope = "train";
  std::optional<std::size_t> tf_epochs;
  std::uint64_t tf_seed = 0;
  tf->add_option("--data", tf_data, "trace CSV")->required();
  tf->add_option("--out", tf_out, "checkpoint to write")->required();
  std::optional<std::size_t> tf_batch;
  tf->add_option("--epochs", tf_epochs, "maximum epochs");
  tf->add_option("--batch", tf_batch, "mini-batch size");
  tf->add_option("--history", tf_history, "per-epoch loss CSV");
  tf->add_option("--fit-scope", tf_scope, "normalizer fit range")->check(CLI::IsMember({"train", "all"}));
  tf->add_option("--seed", tf_seed, "random seed");

  // train-agent
  auto* ta = app.add_subcommand("train-agent", "Train the DDQN split scheduler");
  std::string ta_data, ta_fc, ta_out, ta_log;
  std::size_t ta_episodes = 100;
  std::uint64_t ta_seed = 0;
  bool ta_oracle = false;
  ta->add_option("--data", ta_data, "trace CSV")->required();
  ta->add_option("--forecaster", ta_fc, "forecaster checkpoint")->required();
  ta->add_option("--out", ta_out, "Q-network checkpoint to write")->required();
  ta->add_option("--episodes", ta_episodes, "training episodes")->check(CLI::PositiveNumber);
  ta->add_option("--log", ta_log, "episode log CSV");
  ta->add_flag("--oracle-state", ta_oracle, "use true future demand instead of the forecaster in the state");
  ta->add_option("--seed", ta_seed, "random seed");

  // train-sacd
  auto* ts = app.add_subcommand("train-sacd", "Train the queue-less SAC-Discrete frame selector");
  std::string ts_data, ts_out, ts_hist;
  std::optional<std::size_t> ts_episodes;
  std::uint64_t ts_seed = 0;
  ts->add_option("--data", ts_data, "trace CSV")->required();
  ts->add_option("--out", ts_out, "actor checkpoint to write")->required();
  ts->add_option("--episodes", ts_episodes, "training episodes");
  ts->add_option("--histogram", ts_hist, "greedy evaluation histogram CSV");
  ts->add_option("--seed", ts_seed, "random seed");

  // run-static
  auto* rs = app.add_subcommand("run-static", "Run a fixed UL:DL split through the queued environment");
  std::string rs_data, rs_out, rs_split = "20:80";
  std::uint64_t rs_seed = 0;
  rs->add_option("--data", rs_data, "trace CSV")->required();
  rs->add_option("--out", rs_out, "step log CSV")->required();
  rs->add_option("--split", rs_split, "UL:DL percentages");
  rs->add_option("--seed", rs_seed, "unused; accepted for uniformity");

  // forecast
  auto* fc = app.add_subcommand("forecast", "Stitched multi-window forecast over a slot range");
  std::string fc_data, fc_ckpt, fc_out;
  std::size_t fc_start = 30, fc_slots = 800;
  bool fc_auto = false;
  std::uint64_t fc_seed = 0;
  fc->add_option("--data", fc_data, "trace CSV")->required();
  fc->add_option("--forecaster,--ckpt", fc_ckpt, "forecaster checkpoint")->required();
  fc->add_option("--out", fc_out, "forecast CSV")->required();
  fc->add_option("--start", fc_start, "first predicted slot");
  fc->add_option("--slots", fc_slots, "slots to predict (multiple of the horizon)");
  fc->add_flag("--autoregressive", fc_auto, "feed predictions back as history");
  fc->add_option("--seed", fc_seed, "unused; accepted for uniformity");

  // compare
  auto* cmp = app.add_subcommand("compare", "Evaluate DDQN, SAC-D and the static split on one trace");
  std::string cmp_data, cmp_fc, cmp_agent, cmp_sacd, cmp_out, cmp_split = "20:80";
  std::optional<std::size_t> cmp_first, cmp_last;
  std::uint64_t cmp_seed = 0;
  cmp->add_option("--data", cmp_data, "trace CSV")->required();
  cmp->add_option("--forecaster", cmp_fc, "forecaster checkpoint")->required();
  cmp->add_option("--agent", cmp_agent, "DDQN checkpoint")->required();
  cmp->add_option("--sacd", cmp_sacd, "SAC-D checkpoint")->required();
  cmp->add_option("--out", cmp_out, "output directory")->required();
  cmp->add_option("--split", cmp_split, "static UL:DL split");
  cmp->add_option("--first", cmp_first, "first evaluated slot (default: lookback)");
  cmp->add_option("--last", cmp_last, "one past the last evaluated slot (default: trace end)");
  cmp->add_option("--seed", cmp_seed, "unused; accepted for uniformity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();  // delegates to the selected subcommand
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs[0]->help());
    return 1;
  }

  try {
    KeyValues kv = config_path.empty() ? KeyValues{} : KeyValues::load(config_path);

    if (*gen) {
      traffic::ModulatedChain chain = traffic::default_chain();
      if (!gen_chain.empty()) {
        chain = traffic::chain_from_config(KeyValues::load(gen_chain));
      } else if (kv.has("n_states")) {
        chain = traffic::chain_from_config(kv);
      }
      const auto tr = traffic::generate_trace(chain, gen_slots, gen_seed);
      traffic::write_trace_csv(gen_out, tr);
      traffic::write_states_csv(traffic::states_sidecar(gen_out), tr);
      out << "wrote " << tr.size() << " slots to " << gen_out << "\n";
    } else if (*tf) {
      auto cfg = forecaster_config(kv);
      if (tf_epochs) cfg.epochs = *tf_epochs;
      if (tf_batch) cfg.batch_size = *tf_batch;
      cfg.seed = tf_seed;
      const auto tr = traffic::read_trace_csv(tf_data);
      const auto scope = tf_scope == "all" ? traffic::FitScope::All : traffic::FitScope::Train;
      forecast::ForecastModel model(tf_seed);
      model.normalizer = traffic::fit_normalizer(tr, traffic::normalizer_fit_range(tr.size(), 30, 10, scope));
      const auto ds = traffic::make_windows(tr, model.normalizer);
      const auto hist = forecast::train(model, ds, cfg, [&](std::size_t ep, const forecast::TrainHistory& h) {
        out << "epoch " << ep + 1 << " train_loss " << fmt_num(h.train_loss.back()) << " val_loss " << fmt_num(h.val_loss.back())
            << "\n";
      });
      forecast::save_forecaster(tf_out, model);
      auto reloaded = forecast::load_forecaster(tf_out);
      const auto mae = forecast::evaluate_mae(reloaded, ds, reloaded.normalizer);
      out << "test MAE: UL " << fmt_num(mae.ul_bits) << " bits/slot (" << fmt_num(mae.ul_pct) << "%), DL " << fmt_num(mae.dl_bits)
          << " bits/slot (" << fmt_num(mae.dl_pct) << "%)\n";
      if (!tf_history.empty()) {
        auto os = open_csv(tf_history);
        os << "epoch,train_loss,val_loss,val_mae\n";
        for (std::size_t i = 0; i < hist.epochs_run(); ++i) {
          os << i << ',' << fmt_num(hist.train_loss[i]) << ',' << fmt_num(hist.val_loss[i]) << ',' << fmt_num(hist.val_mae[i]) << '\n';
        }
        close_csv(os, tf_history);
      }
    } else if (*ta) {
      const auto ecfg = env::EnvConfig::from(kv);
      auto acfg = ddqn::AgentConfig::from(kv);
      acfg.seed = ta_seed;
      const auto tr = traffic::read_trace_csv(ta_data);
      auto model = forecast::load_forecaster(ta_fc);
      std::optional<forecast::ForecastTable> table;
      std::unique_ptr<env::ForecastSource> src;
      if (ta_oracle) {
        src = std::make_unique<env::OracleSource>(tr, model.normalizer);
      } else {
        table.emplace(model, tr, env::SbfdEnv::kMinStart, tr.size());
        src = std::make_unique<env::TableSource>(*table);
      }
      env::SbfdEnv e(tr, *src, ecfg);
      ddqn::Agent agent(acfg);
      const auto log = ddqn::train_loop(e, tr.size(), agent, ta_episodes, [&](const ddqn::EpisodeRecord& r) {
        if ((r.episode + 1) % 10 == 0 || r.episode == 0) {
          out << "episode " << r.episode + 1 << " eps " << fmt_num(r.epsilon) << " reward " << fmt_num(r.mean_reward) << "\n";
        }
      });
      ddqn::save_qnetwork(ta_out, agent.online());
      if (!ta_log.empty()) ddqn::write_episode_log(ta_log, log);
      out << "target syncs: " << agent.sync_log().size() << ", gradient steps: " << agent.gradient_steps() << "\n";
    } else if (*ts) {
      auto scfg = baselines::SacdConfig::from(kv);
      if (ts_episodes) scfg.episodes = *ts_episodes;
      scfg.seed = ts_seed;
      scfg.validate();
      const auto tr = traffic::read_trace_csv(ts_data);
      baselines::SacdAgent agent(scfg);
      const auto res = baselines::sacd_train(tr, agent, [&](const baselines::SacdEpisode& r) {
        if ((r.episode + 1) % 10 == 0 || r.episode == 0) {
          out << "episode " << r.episode + 1 << " reward " << fmt_num(r.mean_reward) << " alpha " << fmt_num(r.alpha) << " entropy "
              << fmt_num(r.entropy) << "\n";
        }
      });
      agent.save(ts_out);
      for (std::size_t a = 0; a < baselines::kFrames; ++a) {
        out << scfg.frames[a].name << ": " << res.eval_histogram[a] << "\n";
      }
      if (!ts_hist.empty()) baselines::write_histogram(ts_hist, res.eval_histogram, scfg.frames);
    } else if (*rs) {
      const auto ecfg = env::EnvConfig::from(kv);
      const auto split = env::parse_split(rs_split);
      const auto tr = traffic::read_trace_csv(rs_data);
      require(tr.size() > env::SbfdEnv::kMinStart, ErrorKind::InsufficientTrace, "trace too short");
      const auto log = baselines::static_run(tr, split, ecfg, env::SbfdEnv::kMinStart, tr.size());
      env::write_step_log(rs_out, log);
      out << "wrote " << log.size() << " steps to " << rs_out << "\n";
    } else if (*fc) {
      const auto tr = traffic::read_trace_csv(fc_data);
      auto model = forecast::load_forecaster(fc_ckpt);
      const auto pts = forecast::stitched_forecast(model, tr, model.normalizer, fc_start, fc_slots, fc_auto);
      eval::write_forecast_csv(fc_out, tr, pts);
      out << "wrote " << pts.size() << " forecast slots to " << fc_out << "\n";
    } else if (*cmp) {
      eval::CompareInputs in;
      in.env = env::EnvConfig::from(kv);
      in.static_split = env::parse_split(cmp_split);
      const auto tr = traffic::read_trace_csv(cmp_data);
      auto model = forecast::load_forecaster(cmp_fc);
      auto q = ddqn::load_qnetwork(cmp_agent);
      auto sacd = baselines::load_sacd_policy(cmp_sacd);
      require(q.in_dim() == env::kStateDim && q.out_dim() == env::kActions, ErrorKind::ShapeMismatch, "DDQN checkpoint has wrong dimensions");
      in.forecaster = &model;
      in.ddqn = &q;
      in.sacd = &sacd;
      const std::size_t first = cmp_first.value_or(model.arch().lookback);
      const std::size_t last = cmp_last.value_or(tr.size());
      const auto r = eval::run_compare(tr, in, first, last);
      const fs::path dir(cmp_out);
      eval::write_report_csv(dir / "report.csv", r.report);
      eval::write_series(dir, r);
      eval::emit_plots(dir, tr, r);
      eval::print_report(out, r.report);
    }
    warn_unused(kv, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace sbfd::cli
