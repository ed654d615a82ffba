#pragma once

// Shim over the vendored single-header nlohmann/json so sources can use the
// conventional <nlohmann/json.hpp> include path.
#include <json.hpp>
