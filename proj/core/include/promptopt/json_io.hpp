#pragma once
// JSON bindings for the run-store format. Round-trip safe: parsing the
// output of to_json yields a structurally equal value.

#include <nlohmann/json.hpp>

#include "promptopt/domain.hpp"

namespace promptopt {

void to_json(nlohmann::json& j, const PromptProgram& p);
void from_json(const nlohmann::json& j, PromptProgram& p);

void to_json(nlohmann::json& j, const ContextPassage& c);
void from_json(const nlohmann::json& j, ContextPassage& c);

void to_json(nlohmann::json& j, const Example& e);
void from_json(const nlohmann::json& j, Example& e);

void to_json(nlohmann::json& j, const TargetOutput& t);
void from_json(const nlohmann::json& j, TargetOutput& t);

void to_json(nlohmann::json& j, const MetricSet& m);
void from_json(const nlohmann::json& j, MetricSet& m);

void to_json(nlohmann::json& j, const FailureDiagnosis& d);
void from_json(const nlohmann::json& j, FailureDiagnosis& d);

void to_json(nlohmann::json& j, const DiagnosisRef& r);
void from_json(const nlohmann::json& j, DiagnosisRef& r);

void to_json(nlohmann::json& j, const FailureTopic& t);
void from_json(const nlohmann::json& j, FailureTopic& t);

void to_json(nlohmann::json& j, const DiagnosticReport& r);
void from_json(const nlohmann::json& j, DiagnosticReport& r);

void to_json(nlohmann::json& j, const TopicSummary& s);
void from_json(const nlohmann::json& j, TopicSummary& s);

void to_json(nlohmann::json& j, const CompressedReport& r);
void from_json(const nlohmann::json& j, CompressedReport& r);

void to_json(nlohmann::json& j, const Memory& m);
void from_json(const nlohmann::json& j, Memory& m);

void to_json(nlohmann::json& j, const PatchDecision& d);
void from_json(const nlohmann::json& j, PatchDecision& d);

}  // namespace promptopt
