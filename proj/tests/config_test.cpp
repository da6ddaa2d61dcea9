#include <doctest.h>

#include "usbone/config.hpp"

#include "testutil.hpp"

#include <fstream>

using namespace usbone;

TEST_CASE("empty document keeps every default") {
    const RunConfig cfg = parse_run_config("{}");
    CHECK(cfg.tga.attenuation_a == 0.01);
    CHECK(cfg.bonemap.scales == std::vector<double>{8.0, 16.0, 32.0});
    CHECK(cfg.network.K == 10);
    CHECK(cfg.train.epochs == 100);
    CHECK(cfg.train.learning_rate == 0.001);
    CHECK(cfg.phantom.size == 256);
    CHECK_FALSE(cfg.phantom.fracture.has_value());
}

TEST_CASE("sections override only their own fields") {
    const RunConfig cfg = parse_run_config(
        R"({"train":{"epochs":5,"seed":42},"phantom":{"fracture":{"column":60,"step":2.5}}})");
    CHECK(cfg.train.epochs == 5);
    CHECK(cfg.train.seed == 42);
    CHECK(cfg.train.batch_size == 16);  // untouched
    REQUIRE(cfg.phantom.fracture.has_value());
    CHECK(cfg.phantom.fracture->column == 60);
    CHECK(cfg.phantom.fracture->gap_width == 6);  // default inside the section
    CHECK(cfg.phantom.fracture->step == 2.5);
}

TEST_CASE("explicit null clears the fracture") {
    const RunConfig cfg = parse_run_config(R"({"phantom":{"fracture":null}})");
    CHECK_FALSE(cfg.phantom.fracture.has_value());
}

TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(parse_run_config(R"({"tga":{},"extra":1})"), ArgumentError);
    CHECK_THROWS_AS(parse_run_config(R"({"train":{"epoch":5}})"), ArgumentError);
    CHECK_THROWS_AS(parse_run_config(R"({"phantom":{"fracture":{"col":1}}})"), ArgumentError);
}

TEST_CASE("malformed documents and value types are rejected") {
    CHECK_THROWS_AS(parse_run_config("{"), ArgumentError);
    CHECK_THROWS_AS(parse_run_config("[]"), ArgumentError);
    CHECK_THROWS_AS(parse_run_config(R"({"train":{"epochs":"many"}})"), ArgumentError);
    CHECK_THROWS_AS(parse_run_config(R"({"bonemap":{"scales":8}})"), ArgumentError);
}

TEST_CASE("canonical serialization is a fixed point") {
    RunConfig cfg;
    cfg.train.epochs = 20;
    cfg.train.learning_rate = 0.00095;
    cfg.bonemap.scales = {8.0, 12.5};
    cfg.phantom.fracture = FractureSpec{100, 4, 1.0 / 3.0};

    const std::string text = canonical_json(cfg);
    const RunConfig back = parse_run_config(text);
    CHECK(canonical_json(back) == text);

    CHECK(back.train.epochs == 20);
    CHECK(back.train.learning_rate == 0.00095);
    CHECK(back.bonemap.scales == cfg.bonemap.scales);
    REQUIRE(back.phantom.fracture.has_value());
    CHECK(back.phantom.fracture->step == 1.0 / 3.0);

    // defaults round trip too
    const std::string base = canonical_json(RunConfig{});
    CHECK(canonical_json(parse_run_config(base)) == base);
}

TEST_CASE("config files load or fail by path") {
    testutil::TempDir tmp;
    {
        std::ofstream f(tmp.file("c.json"));
        f << R"({"network":{"k":3}})";
    }
    CHECK(load_run_config(tmp.file("c.json")).network.K == 3);
    CHECK_THROWS_AS(load_run_config(tmp.file("missing.json")), IoError);
}
