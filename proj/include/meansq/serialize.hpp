#pragma once

#include <string>

#include <json.hpp>

#include "meansq/channel.hpp"
#include "meansq/mcsim.hpp"
#include "meansq/msstab.hpp"
#include "meansq/synthesis.hpp"

namespace meansq {

using Json = nlohmann::json;

// Matrices serialize as row arrays, vectors as flat arrays.
Json to_json(const Matrix& m);
Json to_json(const Vector& v);
Matrix matrix_from_json(const Json& j, const std::string& where);
Vector vector_from_json(const Json& j, const std::string& where);

Json to_json(const LaurentPoly& p);
LaurentPoly laurent_from_json(const Json& j, const std::string& where);

Json to_json(const RationalFn& f);
Json to_json(const StateSpaceModel& ss);
StateSpaceModel state_space_from_json(const Json& j, const std::string& where);

Json to_json(const ChannelStatistics& st);
Json to_json(const StabilityReport& report);
Json to_json(const StabilizabilityReport& report);
Json to_json(const SimReport& report);

// Strict-object helper: rejects keys outside `allowed`, reporting the path.
void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed,
                         const std::string& where);

}  // namespace meansq
