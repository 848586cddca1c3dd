#pragma once

#include <string>

#include "sparta/catalog.hpp"

namespace sparta::testing {

std::string fixture_dir();

/// Path to a fresh SQLite file built from nba_fixture.sql. Created once per
/// process under the system temp directory.
const std::string& fixture_db();

/// Builds a database from an arbitrary script at a new temp path.
std::string make_db(const std::string& script, const std::string& tag);

/// Fixture catalog with join edges inferred and the two game tables as
/// grounding tables.
const Catalog& fixture_catalog();

std::string templates_path();

}  // namespace sparta::testing
