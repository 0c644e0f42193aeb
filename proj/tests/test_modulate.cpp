#include <catch2/catch_amalgamated.hpp>
#include "rdmc/modulate.hpp"
TEST_CASE("placeholder") { CHECK(true); }
