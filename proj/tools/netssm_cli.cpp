// Command-line surface: preprocess PCAPs to token samples, train the
// model, generate synthetic traces from a job manifest, and run the
// four evaluation batteries. Every run is replayable from config,
// manifest and seeds alone.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "netssm/codec.hpp"
#include "netssm/errors.hpp"
#include "netssm/eval/compliance.hpp"
#include "netssm/eval/memorization.hpp"
#include "netssm/eval/semantic.hpp"
#include "netssm/eval/stat.hpp"
#include "netssm/pcap.hpp"
#include "netssm/pipeline.hpp"
#include "netssm/ssm/checkpoint.hpp"
#include "netssm/ssm/sampler.hpp"
#include "netssm/ssm/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace netssm;

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return json::parse(in);
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << j.dump(2) << '\n';
}

struct Config {
  std::vector<std::string> labels;
  codec::FrameProfile profile;
  ssm::ModelConfig model;
  ssm::TrainConfig train;
  ssm::GenerationParams gen;

  static Config load(const std::string& path) {
    json j = load_json(path);
    Config c;
    c.labels = j.value("labels", std::vector<std::string>{});
    if (j.contains("profile")) {
      const auto& p = j["profile"];
      c.profile.eth_len = p.value("eth_len", c.profile.eth_len);
      c.profile.ip_len = p.value("ip_len", c.profile.ip_len);
      c.profile.transport_max = p.value("transport_max", c.profile.transport_max);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.vocab_size = m.value("vocab_size", c.model.vocab_size);
      c.model.model_dim = m.value("model_dim", c.model.model_dim);
      c.model.state_dim = m.value("state_dim", c.model.state_dim);
      c.model.n_layers = m.value("n_layers", c.model.n_layers);
      c.model.context_len = m.value("context_len", c.model.context_len);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.grad_clip = t.value("grad_clip", c.train.grad_clip);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
      c.train.rng_seed = t.value("rng_seed", c.train.rng_seed);
    }
    if (j.contains("generation")) {
      const auto& g = j["generation"];
      c.gen.repetition_penalty = g.value("repetition_penalty", c.gen.repetition_penalty);
      c.gen.temperature = g.value("temperature", c.gen.temperature);
      c.gen.min_p = g.value("min_p", c.gen.min_p);
      c.gen.top_k = g.value("top_k", c.gen.top_k);
      c.gen.top_p = g.value("top_p", c.gen.top_p);
      c.gen.rng_seed = g.value("rng_seed", c.gen.rng_seed);
    }
    return c;
  }
};

codec::Vocabulary vocab_for(const Config& c) {
  if (c.labels.empty()) throw InputError("config: label list is empty");
  return codec::Vocabulary::with_labels(c.labels);
}

std::vector<std::string> pcaps_in(const std::string& path) {
  std::vector<std::string> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.path().extension() == ".pcap") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  return files;
}

int cmd_preprocess(const Config& cfg, const std::string& input, const std::string& label,
                   const std::string& out_dir, bool single_flow, bool bidirectional) {
  auto vocab = vocab_for(cfg);
  fs::create_directories(out_dir);
  json manifest;
  manifest["samples"] = json::array();
  json errors = json::array();
  std::map<std::string, std::size_t> label_hist;
  std::size_t emitted = 0;

  for (const auto& file : pcaps_in(input)) {
    pcap::Trace trace;
    try {
      trace = pcap::read_pcap_file(file);
    } catch (const Error& e) {
      errors.push_back({{"file", file}, {"error", e.what()}});
      continue;
    }
    std::vector<pcap::Trace> units;
    if (single_flow) {
      for (auto& [key, flow] : pcap::split_flows(trace, bidirectional))
        if (key != pcap::kNonIpFlowKey) units.push_back(std::move(flow));
    } else {
      units.push_back(std::move(trace));
    }
    std::size_t unit_no = 0;
    for (const auto& unit : units) {
      codec::TokenSequence sample;
      try {
        sample = codec::build_sample(unit, label, cfg.profile, vocab);
      } catch (const Error& e) {
        errors.push_back({{"file", file}, {"error", e.what()}});
        continue;
      }
      for (const auto& chunk :
           codec::window_sample(sample, cfg.model.context_len, cfg.profile, vocab)) {
        std::string name = fs::path(file).stem().string() + "_" + std::to_string(unit_no) +
                           "_" + std::to_string(emitted) + ".tokens";
        std::ofstream out(fs::path(out_dir) / name);
        out << codec::emit_text(chunk, vocab) << '\n';
        manifest["samples"].push_back(name);
        ++label_hist[label];
        ++emitted;
      }
      ++unit_no;
    }
  }
  if (emitted == 0) {
    std::cerr << "preprocess: no samples produced\n";
    return 1;
  }
  manifest["count"] = emitted;
  manifest["labels"] = label_hist;
  manifest["vocabulary"] = json::parse(vocab.to_json());
  manifest["vocab_hash"] = vocab.hash();
  write_json(manifest, (fs::path(out_dir) / "manifest.json").string());
  std::cout << "preprocess: wrote " << emitted << " samples to " << out_dir << '\n';
  return 0;
}

int cmd_train(const Config& cfg, const std::string& sample_dir, const std::string& ckpt_path,
              const std::string& loss_csv) {
  auto vocab = vocab_for(cfg);
  json manifest = load_json((fs::path(sample_dir) / "manifest.json").string());
  if (manifest.at("vocab_hash").get<uint64_t>() != vocab.hash())
    throw VocabularyError("train: sample vocabulary does not match the config vocabulary");

  std::vector<codec::TokenSequence> dataset;
  for (const auto& name : manifest.at("samples")) {
    std::ifstream in(fs::path(sample_dir) / name.get<std::string>());
    if (!in) throw InputError("train: missing sample " + name.get<std::string>());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    dataset.push_back(codec::parse_text(text, vocab));
  }

  ssm::ModelConfig mc = cfg.model;
  mc.vocab_size = std::max(mc.vocab_size, vocab.size());
  auto params = ssm::ParametersF::init(mc, cfg.train.rng_seed);

  std::ofstream csv(loss_csv);
  if (!csv) throw InputError("train: cannot write " + loss_csv);
  csv << "epoch,mean_loss_nats\n";
  if (cfg.train.epochs > 0) {
    ssm::train<float>(params, dataset, cfg.train, [&](const ssm::EpochLoss& e) {
      csv << e.epoch << ',' << e.mean_loss_nats << '\n';
      csv.flush();
      std::cout << "epoch " << e.epoch << " loss " << e.mean_loss_nats << " nats\n";
    });
  }
  ssm::save_checkpoint<float>(params, vocab.hash(), ckpt_path);
  std::cout << "train: checkpoint written to " << ckpt_path << '\n';
  return 0;
}

int cmd_generate(const Config& cfg, const std::string& ckpt_path, const std::string& jobs_path,
                 const std::string& out_dir, const std::string& report_path) {
  auto vocab = vocab_for(cfg);
  uint64_t ckpt_hash = 0;
  auto params = ssm::load_checkpoint<float>(ckpt_path, &ckpt_hash);
  if (ckpt_hash != vocab.hash())
    throw VocabularyError("generate: checkpoint vocabulary hash does not match the config");

  json jobs = load_json(jobs_path);
  fs::create_directories(out_dir);
  json report = json::array();
  for (const auto& job : jobs.at("jobs")) {
    auto start = std::chrono::steady_clock::now();
    pipeline::SeedSpec spec;
    spec.label = job.at("label").get<std::string>();
    spec.source_trace = pcap::read_pcap_file(job.at("seed_pcap").get<std::string>());
    spec.n_packets = job.at("n_packets").get<std::size_t>();
    std::size_t target = job.at("target_packets").get<std::size_t>();
    pcap::Trace iat_source = pcap::read_pcap_file(
        job.value("iat_pcap", job.at("seed_pcap").get<std::string>()));

    ssm::GenerationParams gp = cfg.gen;
    gp.rng_seed = job.value("rng_seed", gp.rng_seed);
    auto seed = pipeline::make_seed(spec, cfg.profile, vocab);
    pipeline::SynthesisReport sr;
    auto trace = pipeline::synthesize(params, seed, target, gp, iat_source,
                                      gp.rng_seed, cfg.profile, vocab, &sr);
    std::string out_file =
        (fs::path(out_dir) / job.at("output").get<std::string>()).string();
    pcap::write_pcap_file(trace, out_file);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                      .count();
    report.push_back({{"output", out_file},
                      {"packets", trace.records.size()},
                      {"dropped_frames", sr.dropped_frames},
                      {"sampler_fallbacks", sr.sampler_fallbacks},
                      {"generated_tokens", sr.generated_tokens},
                      {"seconds", secs}});
  }
  write_json(json{{"jobs", report}}, report_path);
  std::cout << "generate: " << report.size() << " jobs done, report at " << report_path
            << '\n';
  return 0;
}

std::vector<std::pair<pcap::Trace, pcap::Trace>> load_pairs(
    const std::vector<std::string>& syn, const std::vector<std::string>& gt) {
  if (syn.size() != gt.size()) {
    std::string msg = "unpaired inputs;";
    for (std::size_t i = std::min(syn.size(), gt.size()); i < syn.size(); ++i)
      msg += " orphan synthetic " + syn[i];
    for (std::size_t i = std::min(syn.size(), gt.size()); i < gt.size(); ++i)
      msg += " orphan ground-truth " + gt[i];
    throw PairingError(msg);
  }
  std::vector<std::pair<pcap::Trace, pcap::Trace>> out;
  for (std::size_t i = 0; i < syn.size(); ++i)
    out.emplace_back(pcap::read_pcap_file(syn[i]), pcap::read_pcap_file(gt[i]));
  return out;
}

int cmd_eval_stat(const std::vector<std::string>& syn, const std::vector<std::string>& gt,
                  const std::string& report_path) {
  auto pairs = load_pairs(syn, gt);
  json report;
  report["pairs"] = json::array();
  std::map<std::string, eval::Divergences> sums;
  eval::Divergences hdr_sum;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [s, g] = pairs[i];
    auto sa = eval::extract_attributes(s);
    auto ga = eval::extract_attributes(g);
    json row{{"synthetic", syn[i]}, {"ground_truth", gt[i]}};
    for (const char* attr : eval::kAttributes) {
      auto d = eval::divergences(sa[attr], ga[attr]);
      row["attributes"][attr] = {{"jsd", d.jsd}, {"tvd", d.tvd}, {"hd", d.hd}};
      sums[attr].jsd += d.jsd;
      sums[attr].tvd += d.tvd;
      sums[attr].hd += d.hd;
    }
    auto hd = eval::header_distances(eval::to_bitgrid(s), eval::to_bitgrid(g));
    row["header"] = {{"jsd", hd.jsd}, {"tvd", hd.tvd}, {"hd", hd.hd}};
    hdr_sum.jsd += hd.jsd;
    hdr_sum.tvd += hd.tvd;
    hdr_sum.hd += hd.hd;
    report["pairs"].push_back(row);
  }
  double n = double(pairs.size());
  for (const char* attr : eval::kAttributes)
    report["averages"]["attributes"][attr] = {
        {"jsd", sums[attr].jsd / n}, {"tvd", sums[attr].tvd / n}, {"hd", sums[attr].hd / n}};
  report["averages"]["header"] = {
      {"jsd", hdr_sum.jsd / n}, {"tvd", hdr_sum.tvd / n}, {"hd", hdr_sum.hd / n}};
  write_json(report, report_path);
  return 0;
}

int cmd_eval_semantic(const std::vector<std::string>& syn, const std::vector<std::string>& gt,
                      const std::string& rule, const std::vector<std::string>& cdn,
                      const std::string& evaluation, const std::string& report_path,
                      const std::string& throughput_csv) {
  auto pairs = load_pairs(syn, gt);
  std::vector<eval::IpPrefix> prefixes;
  for (const auto& c : cdn) prefixes.push_back(eval::IpPrefix::parse(c));
  eval::SegmentEvaluation ev = evaluation == "raw"     ? eval::SegmentEvaluation::raw_size
                               : evaluation == "avg"   ? eval::SegmentEvaluation::avg_size_per_flow
                               : evaluation == "count" ? eval::SegmentEvaluation::count_per_flow
                                                       : throw InputError(
                                                             "unknown evaluation " + evaluation);
  json report;
  report["pairs"] = json::array();
  std::ofstream csv;
  if (!throughput_csv.empty()) {
    csv.open(throughput_csv);
    csv << "pair,flow,slice,kilobits\n";
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [s, g] = pairs[i];
    auto segs = rule == "netflix" ? eval::extract_segments_netflix(s, prefixes)
                                  : eval::extract_segments_youtube(s);
    auto segg = rule == "netflix" ? eval::extract_segments_netflix(g, prefixes)
                                  : eval::extract_segments_youtube(g);
    json row{{"synthetic", syn[i]}, {"ground_truth", gt[i]}};
    row["segments"] = {{"synthetic", segs.size()}, {"ground_truth", segg.size()}};
    auto c = eval::compare_segments(segg, segs, ev);
    row["comparison"] = {{"mean_delta", c.mean_delta},   {"median_delta", c.median_delta},
                         {"stddev_delta", c.stddev_delta}, {"ks_stat", c.ks_stat},
                         {"ks_p", c.ks_p},               {"ad_stat", c.ad_stat},
                         {"ad_p", c.ad_p},               {"kl_nats", c.kl_nats},
                         {"emd", c.emd}};
    auto ts = eval::throughput(s);
    auto tg = eval::throughput(g);
    auto sim = eval::series_similarity(tg.aggregate, ts.aggregate);
    row["throughput"] = {{"pcc", sim.pcc ? json(*sim.pcc) : json(nullptr)},
                         {"dtw_normalized", sim.dtw_normalized}};
    if (csv.is_open())
      for (const auto& [flow, series] : ts.per_flow)
        for (std::size_t k = 0; k < series.size(); ++k)
          csv << i << ',' << flow << ',' << k << ',' << series[k] << '\n';
    report["pairs"].push_back(row);
  }
  write_json(report, report_path);
  return 0;
}

json rates_json(const eval::ComplianceRates& r) {
  json j;
  for (const auto& [k, v] : r) j[k] = v;
  return j;
}

int cmd_eval_compliance(const std::vector<std::string>& syn, const std::vector<std::string>& gt,
                        const std::string& report_path) {
  auto collect = [](const std::vector<std::string>& files) {
    std::vector<eval::FlowComplianceRecord> recs;
    json per_flow = json::array();
    for (const auto& f : files) {
      auto trace = pcap::read_pcap_file(f);
      for (auto& [key, flow] : pcap::split_flows(trace, true)) {
        if (key == pcap::kNonIpFlowKey) continue;
        auto r = eval::check_flow(flow);
        per_flow.push_back({{"file", f},
                            {"flow", key},
                            {"fin_seen", r.fin_seen},
                            {"correct_handshake", r.correct_handshake},
                            {"ack_progress", r.ack_progress},
                            {"seq_progress", r.seq_progress},
                            {"finack_observed", r.finack_observed},
                            {"conflicting_flags", r.conflicting_flags},
                            {"sack_without_ok", r.sack_without_ok},
                            {"unexpected_syn", r.unexpected_syn},
                            {"mss_outside_handshake", r.mss_outside_handshake},
                            {"wscale_outside_handshake", r.wscale_outside_handshake},
                            {"rst_in_established", r.rst_in_established}});
        recs.push_back(r);
      }
    }
    return std::pair(recs, per_flow);
  };
  auto [syn_recs, syn_rows] = collect(syn);
  auto [gt_recs, gt_rows] = collect(gt);
  json report;
  report["synthetic_flows"] = syn_rows;
  report["ground_truth_flows"] = gt_rows;
  auto syn_rates = eval::corpus_report(syn_recs);
  auto gt_rates = eval::corpus_report(gt_recs);
  report["synthetic_rates"] = rates_json(syn_rates);
  report["ground_truth_rates"] = rates_json(gt_rates);
  json deltas;
  for (const auto& [k, v] : eval::delta_report(syn_rates, gt_rates))
    deltas[k] = v ? json(*v) : json(nullptr);
  report["pct_delta"] = deltas;
  write_json(report, report_path);
  return 0;
}

int cmd_eval_mem(const std::vector<std::string>& syn, const std::vector<std::string>& gt,
                 const std::string& report_path, std::size_t pair_budget, uint64_t seed) {
  auto pairs = load_pairs(syn, gt);
  json report;
  report["pairs"] = json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [s, g] = pairs[i];
    auto em = eval::exact_match_stats(s, g);
    auto nn = eval::nn_hamming(s, g);
    auto dv = eval::diversity_ratio(s, g, pair_budget, seed);
    json bins = json::array();
    for (const auto& b : nn.bins)
      bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count},
                      {"mean", b.mean}, {"stddev", b.stddev}});
    report["pairs"].push_back(
        {{"synthetic", syn[i]},
         {"ground_truth", gt[i]},
         {"identical_pct", em.identical_pct},
         {"differing_bytes_pct", em.differing_bytes_pct},
         {"avg_diff_bytes", em.avg_diff_bytes},
         {"nn", {{"mean", nn.mean}, {"median", nn.median}, {"stddev", nn.stddev},
                 {"min", nn.min}, {"max", nn.max}}},
         {"within_pct", {{"5", nn.threshold_pcts[0]}, {"10", nn.threshold_pcts[1]},
                         {"15", nn.threshold_pcts[2]}, {"20", nn.threshold_pcts[3]}}},
         {"index_bins", bins},
         {"diversity_ratio", dv.ratio},
         {"diversity_sampled", dv.sampled}});
  }
  write_json(report, report_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"byte-level packet-trace modeling and evaluation toolkit"};
  app.require_subcommand(1);

  std::string config_path, input, label, out_dir = ".", ckpt = "model.ckpt";
  std::string loss_csv = "loss.csv", jobs_path, report_path = "report.json";
  std::string rule = "youtube", evaluation = "raw", throughput_csv;
  std::vector<std::string> syn_files, gt_files, cdn;
  bool single_flow = false, unidirectional = false;
  std::size_t pair_budget = 1000000;
  uint64_t seed = 0;

  auto* pre = app.add_subcommand("preprocess", "encode PCAPs to token samples");
  pre->add_option("--config", config_path)->required();
  pre->add_option("--input", input, "PCAP file or directory")->required();
  pre->add_option("--label", label)->required();
  pre->add_option("--out", out_dir);
  pre->add_flag("--single-flow", single_flow, "split into per-flow samples");
  pre->add_flag("--unidirectional", unidirectional);

  auto* tr = app.add_subcommand("train", "train on encoded samples");
  tr->add_option("--config", config_path)->required();
  tr->add_option("--samples", input)->required();
  tr->add_option("--checkpoint", ckpt);
  tr->add_option("--loss-csv", loss_csv);

  auto* gen = app.add_subcommand("generate", "synthesize PCAPs from a job manifest");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  gen->add_option("--jobs", jobs_path)->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir);
  gen->add_option("--report", report_path);

  auto add_eval_opts = [&](CLI::App* cmd) {
    cmd->add_option("--syn", syn_files)->required();
    cmd->add_option("--gt", gt_files)->required();
    cmd->add_option("--report", report_path);
  };
  auto* es = app.add_subcommand("eval-stat", "attribute and header-bit divergences");
  add_eval_opts(es);
  auto* em = app.add_subcommand("eval-semantic", "segment and throughput similarity");
  add_eval_opts(em);
  em->add_option("--rule", rule)->check(CLI::IsMember({"netflix", "youtube"}));
  em->add_option("--cdn-prefix", cdn, "CIDR prefixes for the netflix rule");
  em->add_option("--evaluation", evaluation)->check(CLI::IsMember({"raw", "avg", "count"}));
  em->add_option("--throughput-csv", throughput_csv);
  auto* ec = app.add_subcommand("eval-compliance", "TCP session compliance");
  add_eval_opts(ec);
  auto* emem = app.add_subcommand("eval-mem", "memorization and diversity");
  add_eval_opts(emem);
  emem->add_option("--pair-budget", pair_budget);
  emem->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed())
      return cmd_preprocess(Config::load(config_path), input, label, out_dir, single_flow,
                            !unidirectional);
    if (tr->parsed()) return cmd_train(Config::load(config_path), input, ckpt, loss_csv);
    if (gen->parsed())
      return cmd_generate(Config::load(config_path), ckpt, jobs_path, out_dir, report_path);
    if (es->parsed()) return cmd_eval_stat(syn_files, gt_files, report_path);
    if (em->parsed())
      return cmd_eval_semantic(syn_files, gt_files, rule, cdn, evaluation, report_path,
                               throughput_csv);
    if (ec->parsed()) return cmd_eval_compliance(syn_files, gt_files, report_path);
    if (emem->parsed())
      return cmd_eval_mem(syn_files, gt_files, report_path, pair_budget, seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
