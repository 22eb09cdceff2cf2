#include "tabpc/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "tabpc/dataset.hpp"
#include "tabpc/metrics.hpp"
#include "tabpc/pipeline.hpp"
#include "tabpc/sample.hpp"

namespace tabpc::cli {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::io:
    case ErrorKind::unsupported:
    case ErrorKind::budget:
      return kExitUsage;
    case ErrorKind::numeric:
    case ErrorKind::divergence:
    case ErrorKind::impossible_evidence:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

namespace {

const std::vector<std::string> kMetricNames = {"shape", "trend", "wnmis", "nmis", "c2st-lr", "c2st-gbt"};

void write_error(std::ostream& err, std::string_view kind, const std::string& message) {
  err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string stem(const std::string& path) { return std::filesystem::path(path).stem().string(); }

double round_tenth(double seconds) { return std::round(seconds * 10.0) / 10.0; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::io, "cannot write '" + path + "'");
  f << text;
}

void emit(const std::string& out_path, const std::string& text, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
  } else {
    write_text(out_path, text);
  }
}

Schema resolve_schema(const std::string& schema_path, const RawTable& raw) {
  if (!schema_path.empty()) return load_schema_file(schema_path);
  return infer_schema(raw);
}

MaskMatrix load_mask(const std::string& path, const Schema& schema, std::size_t n_rows) {
  const RawTable raw = read_csv_file(path);
  if (raw.header.size() != schema.size()) fail(ErrorKind::schema_mismatch, "mask header does not match the schema");
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (raw.header[c] != schema[c].name) fail(ErrorKind::schema_mismatch, "mask column '" + raw.header[c] + "' is unexpected");
  }
  if (raw.rows.size() != n_rows) fail(ErrorKind::schema_mismatch, "mask and evidence row counts differ");
  MaskMatrix mask(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(schema.size()));
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& cell = raw.rows[r][c];
      if (!cell || (*cell != "0" && *cell != "1")) {
        fail(ErrorKind::parse, "mask row " + std::to_string(r + 1) + " column " + std::to_string(c + 1) + " is not 0 or 1");
      }
      mask(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *cell == "1" ? 1 : 0;
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string model = "tabpc", data, schema, val, out;
  std::size_t units = 32, batch = 512, patience = 10;
  double lr = 0.1;
  std::uint64_t seed = 0;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
  FitOptions options;
  options.kind = model_kind_from(a.model);
  const RawTable raw = read_csv_file(a.data);
  const Schema schema = resolve_schema(a.schema, raw);
  Table train = table_from_raw(raw, schema);
  Table val;
  if (a.val.empty()) {
    SplitTables parts = split(train, {0.9, 0.1, 0.0, a.seed});
    train = std::move(parts.train);
    val = std::move(parts.val);
  } else {
    val = load_table_file(a.val, schema);
  }
  options.build.units = a.units;
  options.build.seed = a.seed;
  options.train.batch_size = a.batch;
  options.train.learning_rate = a.lr;
  options.train.patience_epochs = a.patience;
  options.train.seed = a.seed;

  const FitResult result = fit_model(train, val, options);
  save_model(a.out, result.bundle);
  std::ostringstream history;
  result.history.write_csv(history);
  write_text(a.out + ".history.csv", history.str());
  const nlohmann::json summary{{"model", a.model},
                               {"out", a.out},
                               {"n_train", train.n_rows()},
                               {"n_val", val.n_rows()},
                               {"n_params", result.bundle.circuit.n_params()},
                               {"val_bpd", result.val_bpd},
                               {"stopping_epoch", result.history.stopping_epoch},
                               {"best_epoch", result.history.best_epoch},
                               {"train_seconds", round_tenth(result.seconds)}};
  write_text(a.out + ".summary.json", summary.dump(2) + "\n");
  out << summary.dump() << '\n';
  return kExitOk;
}

struct SampleArgs {
  std::string model, evidence, mask, out;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const ModelBundle bundle = load_model(a.model);
  SampleRequest request;
  request.n_rows = a.n;
  request.seed = a.seed;
  if (!a.mask.empty() && a.evidence.empty()) fail(ErrorKind::usage, "--mask requires --evidence");
  if (!a.evidence.empty()) {
    request.evidence = load_table_file(a.evidence, bundle.plan.raw_schema);
    if (!a.mask.empty()) request.evidence_mask = load_mask(a.mask, bundle.plan.raw_schema, request.evidence->n_rows());
  }
  const Table table = generate_dataset(bundle, request);
  std::ostringstream csv;
  write_csv(csv, table);
  emit(a.out, csv.str(), out);
  return kExitOk;
}

struct EvaluateArgs {
  std::string data, schema, metrics = "shape,trend,wnmis,c2st-lr,c2st-gbt", seeds = "0", model, out;
  std::string synth;
  std::size_t bins = kMiBins;
};

nlohmann::json summarize(const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
  return {{"mean", mean}, {"std", sd}, {"values", values}};
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto metrics = split_list(a.metrics);
  for (const auto& m : metrics) {
    if (std::ranges::find(kMetricNames, m) == kMetricNames.end()) {
      std::string valid;
      for (const auto& v : kMetricNames) valid += (valid.empty() ? "" : ", ") + v;
      fail(ErrorKind::usage, "unknown metric '" + m + "'; valid names: " + valid);
    }
  }
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(a.seeds)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      fail(ErrorKind::usage, "invalid seed '" + s + "'");
    }
  }
  if (seeds.empty()) fail(ErrorKind::usage, "at least one seed is required");

  const RawTable raw = read_csv_file(a.data);
  const Schema schema = resolve_schema(a.schema, raw);
  const Table real = table_from_raw(raw, schema);
  const Table synth = load_table_file(a.synth, schema);

  nlohmann::json scores = nlohmann::json::object();
  nlohmann::json details = nlohmann::json::object();
  for (const auto& m : metrics) {
    if (m == "shape" || m == "trend" || m == "wnmis" || m == "nmis") {
      const MetricReport report = m == "shape"   ? shape(real, synth)
                                  : m == "trend" ? trend(real, synth)
                                  : m == "wnmis" ? wnmis(real, synth, a.bins)
                                                 : nmis_unweighted(real, synth, a.bins);
      scores[m] = summarize({report.score});
      details[m] = report.to_json();
      continue;
    }
    const auto kind = m == "c2st-lr" ? C2stClassifier::logistic : C2stClassifier::gbt;
    std::vector<double> values, aurocs;
    for (auto seed : seeds) {
      const C2stResult r = c2st(real, synth, kind, seed);
      values.push_back(r.score);
      aurocs.push_back(r.auroc);
    }
    scores[m] = summarize(values);
    details[m] = {{"classifier", m == "c2st-lr" ? "logistic" : "gbt"}, {"seeds", seeds}, {"auroc", aurocs}};
  }
  const nlohmann::json report{{"method", a.model.empty() ? stem(a.synth) : a.model},
                              {"dataset", stem(a.data)},
                              {"metrics", scores},
                              {"details", details},
                              {"meta", {{"n_real", real.n_rows()}, {"n_synth", synth.n_rows()}, {"seeds", seeds}}}};
  emit(a.out, report.dump(2) + "\n", out);
  return kExitOk;
}

struct ReportArgs {
  std::vector<std::string> files;
  std::string out;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  if (a.files.empty()) fail(ErrorKind::usage, "report needs at least one report file");
  std::vector<std::string> methods, datasets, metric_names;
  std::map<std::string, std::map<std::pair<std::string, std::string>, double>> table;  // metric -> (method, dataset)
  auto remember = [](std::vector<std::string>& list, const std::string& v) {
    if (std::ranges::find(list, v) == list.end()) list.push_back(v);
  };
  for (const auto& path : a.files) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open report '" + path + "'");
    nlohmann::json doc;
    try {
      in >> doc;
      const auto method = doc.at("method").get<std::string>();
      const auto dataset = doc.at("dataset").get<std::string>();
      remember(methods, method);
      remember(datasets, dataset);
      for (const auto& [name, value] : doc.at("metrics").items()) {
        remember(metric_names, name);
        table[name][{method, dataset}] = value.at("mean").get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse, "malformed report '" + path + "': " + e.what());
    }
  }

  std::ostringstream csv;
  csv << "metric,method";
  for (const auto& d : datasets) csv << ',' << d;
  csv << ",avg_rank\n";
  const double worst = static_cast<double>(methods.size());
  for (const auto& metric : metric_names) {
    const auto& cells = table[metric];
    std::map<std::string, double> rank_sum;
    for (const auto& d : datasets) {
      std::vector<std::pair<double, std::string>> present;
      for (const auto& m : methods) {
        if (auto it = cells.find({m, d}); it != cells.end()) present.emplace_back(it->second, m);
      }
      std::ranges::sort(present, [](const auto& x, const auto& y) { return x.first > y.first; });
      std::map<std::string, double> rank;
      for (std::size_t i = 0; i < present.size();) {
        std::size_t j = i;
        while (j < present.size() && present[j].first == present[i].first) ++j;
        for (std::size_t k = i; k < j; ++k) rank[present[k].second] = 0.5 * static_cast<double>(i + 1 + j);
        i = j;
      }
      for (const auto& m : methods) rank_sum[m] += rank.contains(m) ? rank[m] : worst;
    }
    for (const auto& m : methods) {
      csv << metric << ',' << m;
      for (const auto& d : datasets) {
        csv << ',';
        if (auto it = cells.find({m, d}); it != cells.end()) csv << format_number(it->second);
      }
      csv << ',' << format_number(rank_sum[m] / static_cast<double>(datasets.size())) << '\n';
    }
  }
  emit(a.out, csv.str(), out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probabilistic-circuit tabular data generator", "tabgen"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Train a model and write a model file");
  fit_cmd->add_option("--model", fa.model, "ff, sm or tabpc")->check(CLI::IsMember({"ff", "sm", "tabpc"}));
  fit_cmd->add_option("--data", fa.data, "Training CSV")->required();
  fit_cmd->add_option("--schema", fa.schema, "Schema JSON (inferred when absent)");
  fit_cmd->add_option("--val", fa.val, "Validation CSV (10% of --data when absent)");
  fit_cmd->add_option("--units", fa.units, "Units per region (K)")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--batch", fa.batch, "Batch size")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--lr", fa.lr, "Learning rate")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--patience", fa.patience, "Early-stopping patience in epochs");
  fit_cmd->add_option("--seed", fa.seed, "Seed");
  fit_cmd->add_option("--out", fa.out, "Model file to write")->required();

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Generate rows from a model file");
  sample_cmd->add_option("--model", sa.model, "Model file")->required();
  sample_cmd->add_option("--n", sa.n, "Rows to generate without evidence");
  sample_cmd->add_option("--seed", sa.seed, "Seed");
  sample_cmd->add_option("--evidence", sa.evidence, "Evidence CSV");
  sample_cmd->add_option("--mask", sa.mask, "0/1 mask CSV aligned with --evidence (1 = observed)");
  sample_cmd->add_option("--out", sa.out, "Output CSV (stdout when absent)");

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a synthetic CSV against real data");
  eval_cmd->add_option("synth", ea.synth, "Synthetic CSV")->required();
  eval_cmd->add_option("--data", ea.data, "Real CSV")->required();
  eval_cmd->add_option("--schema", ea.schema, "Schema JSON (inferred from --data when absent)");
  eval_cmd->add_option("--metrics", ea.metrics, "Comma-separated metric names");
  eval_cmd->add_option("--seed", ea.seeds, "Comma-separated seeds");
  eval_cmd->add_option("--bins", ea.bins, "Bins for NMI discretization")->check(CLI::Range(2, 100000));
  eval_cmd->add_option("--model", ea.model, "Method label stored in the report");
  eval_cmd->add_option("--out", ea.out, "Report JSON (stdout when absent)");

  ReportArgs ra;
  auto* report_cmd = app.add_subcommand("report", "Aggregate report JSONs into scores and average ranks");
  report_cmd->add_option("reports", ra.files, "Report JSON files")->required();
  report_cmd->add_option("--out", ra.out, "Output CSV (stdout when absent)");

  std::vector<std::string> argv_tail(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_tail.begin(), argv_tail.end());
  try {
    app.parse(argv_tail);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    write_error(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fa, out);
    if (sample_cmd->parsed()) return cmd_sample(sa, out);
    if (eval_cmd->parsed()) return cmd_evaluate(ea, out);
    return cmd_report(ra, out);
  } catch (const Error& e) {
    write_error(err, to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    write_error(err, "internal", e.what());
    return kExitData;
  }
}

}  // namespace tabpc::cli
