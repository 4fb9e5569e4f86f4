#pragma once

#include <string>

#include <json.hpp>

#include "qpl/harness.hpp"

namespace qpl::report {

using json = nlohmann::ordered_json;

// No timestamps here: reports must be byte-identical across reruns.
json environment_fingerprint();

std::string format_mean_std(double mean, double stddev);  // "72.19 (2.96)"
std::string format_asr_cell(const harness::AsrResult& r);

json to_json(const harness::AsrResult& r);
json to_json(const harness::TransferMatrix& tm);
json to_json(const harness::AlignmentResult& ar);
json to_json(const harness::SpatialReport& sr);
json to_json(const harness::SizeReport& sr);
json to_json(const harness::PgdSweepReport& pr);
json to_json(const harness::DefenseReport& dr);
json to_json(const std::vector<harness::FeatureMapManifestEntry>& fm);

std::string to_csv(const harness::TransferMatrix& tm);
std::string to_csv(const harness::AlignmentResult& ar);
std::string to_csv(const harness::SpatialReport& sr);
std::string to_csv(const harness::SizeReport& sr);
std::string to_csv(const harness::PgdSweepReport& pr);
std::string to_csv(const harness::DefenseReport& dr);

// {experiment, config, results, environment}; losslessly round-trips.
json experiment_report(const std::string& experiment, const json& config, const json& results);

void write_file_atomic(const std::string& path, const std::string& content);
void write_json(const std::string& path, const json& j);

std::string fnv1a_file_hex(const std::string& path);

}  // namespace qpl::report
