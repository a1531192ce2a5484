// SPDX-License-Identifier: Apache-2.0
#include "drum/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "drum/error.hpp"

namespace drum {

namespace {

using json = nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

json config_json(const EvalConfig& cfg) {
  json profile = {
      {"method", to_string(cfg.profile.method)},
      {"ratio", cfg.profile.ratio},
      {"use_preferences", cfg.profile.use_preferences},
      {"seed", cfg.profile.seed},
  };
  profile["approx_size"] = cfg.profile.approx_size ? json(*cfg.profile.approx_size) : json(nullptr);
  return {
      {"label", cfg.label},
      {"alpha", cfg.alpha},
      {"guidance", cfg.guidance},
      {"history", to_string(cfg.history)},
      {"profile", std::move(profile)},
  };
}

}  // namespace

std::string reports_to_json(std::span<const EvalReport> reports) {
  json out = json::array();
  for (const auto& r : reports) {
    json users = json::array();
    for (const auto& u : r.users) {
      users.push_back({
          {"user", u.user},
          {"target_id", u.target_id},
          {"profile_ids", u.profile_ids},
          {"target_align", u.target_align},
          {"history_align", u.history_align},
          {"baseline_history_align", u.baseline_history_align},
          {"condition_target_align", optional_number(u.condition_target_align)},
          {"condition_history_align", optional_number(u.condition_history_align)},
      });
    }
    out.push_back({
        {"config", config_json(r.config)},
        {"target_align", r.target_align},
        {"history_align", r.history_align},
        {"baseline_target_align", r.baseline_target_align},
        {"baseline_history_align", r.baseline_history_align},
        {"improvement_target_pct", optional_number(r.improvement_target)},
        {"improvement_history_pct", optional_number(r.improvement_history)},
        {"improvement_pct", optional_number(r.improvement)},
        {"condition_target_align", optional_number(r.condition_target_align)},
        {"condition_history_align", optional_number(r.condition_history_align)},
        {"users", std::move(users)},
    });
  }
  return out.dump(2) + "\n";
}

std::string reports_to_csv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << "label,method,ratio,alpha,guidance,history,users,target_align,history_align,"
         "baseline_target_align,baseline_history_align,improvement_target_pct,improvement_history_pct,"
         "improvement_pct,condition_target_align,condition_history_align\n";
  for (const auto& r : reports) {
    const auto& c = r.config;
    out << '"' << c.label << '"' << ',' << to_string(c.profile.method) << ',' << num(c.profile.ratio) << ','
        << num(c.alpha) << ',' << (c.guidance ? 1 : 0) << ',' << to_string(c.history) << ',' << r.users.size() << ','
        << num(r.target_align) << ',' << num(r.history_align) << ',' << num(r.baseline_target_align) << ','
        << num(r.baseline_history_align) << ',' << num(r.improvement_target) << ',' << num(r.improvement_history)
        << ',' << num(r.improvement) << ',' << num(r.condition_target_align) << ','
        << num(r.condition_history_align) << '\n';
  }
  return out.str();
}

std::string alpha_sweep_to_json(std::span<const AlphaSweepRow> rows) {
  json out = json::array();
  for (const auto& row : rows) {
    out.push_back({
        {"alpha", row.alpha},
        {"target_align", optional_number(row.target_align)},
        {"reference_align", optional_number(row.reference_align)},
        {"condition_target_align", row.condition_target_align},
        {"condition_reference_align", row.condition_reference_align},
    });
  }
  return out.dump(2) + "\n";
}

std::string alpha_sweep_to_csv(std::span<const AlphaSweepRow> rows) {
  std::ostringstream out;
  out << "alpha,target_align,reference_align,condition_target_align,condition_reference_align\n";
  for (const auto& row : rows) {
    out << num(row.alpha) << ',' << num(row.target_align) << ',' << num(row.reference_align) << ','
        << num(row.condition_target_align) << ',' << num(row.condition_reference_align) << '\n';
  }
  return out.str();
}

std::string train_report_to_json(const TrainReport& report, const TrainConfig& cfg, const AdapterConfig& arch) {
  json out = {
      {"seed", report.seed},
      {"steps", report.steps},
      {"loss", report.loss},
      {"final_loss", report.loss.empty() ? json(nullptr) : json(report.loss.back())},
      {"train_cosine", report.train_cosine},
      {"heldout_cosine", optional_number(report.heldout_cosine)},
      {"grad_check_error", optional_number(report.grad_check_error)},
      {"config",
       {{"batch_size", cfg.batch_size},
        {"lr_init", cfg.lr_init},
        {"lr_floor", cfg.floor()},
        {"total_steps", cfg.total_steps},
        {"beta1", cfg.beta1},
        {"beta2", cfg.beta2},
        {"epsilon", cfg.epsilon},
        {"weight_decay", cfg.weight_decay},
        {"threads", cfg.threads}}},
      {"architecture",
       {{"d_cond", arch.d_cond}, {"d_model", arch.d_model}, {"n_heads", arch.n_heads}, {"n_layers", arch.n_layers}}},
  };
  return out.dump(2) + "\n";
}

std::string profile_to_json(const UserProfile& profile, const CoresetConfig& cfg, double ratio) {
  const json out = {
      {"indices", profile.indices},
      {"ids", profile.source_ids},
      {"config",
       {{"n", cfg.sample_size},
        {"k", cfg.approx_size},
        {"ratio", ratio},
        {"seed", cfg.seed},
        {"use_preferences", cfg.use_preferences}}},
  };
  return out.dump(2) + "\n";
}

UserProfile profile_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    UserProfile p;
    p.indices = j.at("indices").get<std::vector<Index>>();
    p.source_ids = j.at("ids").get<std::vector<std::string>>();
    if (p.indices.size() != p.source_ids.size()) throw FormatError("profile: indices and ids differ in length");
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("profile JSON malformed: ") + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace drum
