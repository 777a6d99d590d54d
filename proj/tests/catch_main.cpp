// Test-framework implementation translation unit.
#include <catch2/catch_amalgamated.cpp>
