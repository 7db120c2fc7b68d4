#pragma once

#include <string_view>

// Generated at configure time from data/ and fixtures/.
namespace conceptseg::embedded {

std::string_view phrase_registry_json();
std::string_view reference_tables_json();

} // namespace conceptseg::embedded
