#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "discover/config.hpp"
#include "discover/error.hpp"
#include "test_util.hpp"

using namespace discover;

TEST(Config, DefaultsAreValid) { EXPECT_NO_THROW(Config{}.validate()); }

TEST(Config, TextRoundTripIsExact) {
    Config c = testutil::small_config();
    c.gadm.metric = Metric::cosine;
    c.kdm.lambda1 = 0.123456789012345;
    c.train.seed = 18446744073709551615ull;
    const Config back = Config::from_text(c.to_text());
    EXPECT_EQ(back.to_text(), c.to_text());
    EXPECT_EQ(back.digest(), c.digest());
}

TEST(Config, EveryKeyAppearsOnceInText) {
    const std::string text = Config{}.to_text();
    for (const auto& k : Config::keys()) {
        const auto first = text.find(k + " = ");
        ASSERT_NE(first, std::string::npos) << k;
        EXPECT_EQ(text.find("\n" + k + " = ", first + 1), std::string::npos) << k;
    }
}

TEST(Config, UnknownKeyIsRejected) {
    Config c;
    EXPECT_THROW(c.set("train.learning_rate", "0.1"), ConfigError);
    EXPECT_THROW(Config::from_text("gadm.metrik = cosine\n"), ConfigError);
}

TEST(Config, BadValuesNameTheKey) {
    Config c;
    try {
        c.set("train.epochs", "many");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.epochs"), std::string::npos);
    }
    EXPECT_THROW(c.set("gadm.metric", "chebyshev"), ConfigError);
    EXPECT_THROW(c.set("kdm.enabled", "maybe"), ConfigError);
    EXPECT_THROW(Config::from_text("just words\n"), ConfigError);
}

TEST(Config, CommentsAndBlankLinesAreIgnored) {
    const Config c = Config::from_text("# header\n\ntrain.epochs = 3  # trailing\n  gadm.metric=manhattan\n");
    EXPECT_EQ(c.train.epochs, 3);
    EXPECT_EQ(c.gadm.metric, Metric::manhattan);
}

TEST(Config, ValidationCatchesInconsistentFields) {
    auto expect_bad = [](auto mutate, const char* key) {
        Config c;
        mutate(c);
        try {
            c.validate();
            ADD_FAILURE() << key;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
        }
    };
    expect_bad([](Config& c) { c.train.batch_size = 7; }, "train.batch_size");
    expect_bad([](Config& c) { c.split.train_ratio = 0.9; }, "split.train_ratio");
    expect_bad([](Config& c) { c.gadm.percentile = 0; }, "gadm.percentile");
    expect_bad([](Config& c) { c.kdm.f0_dim = 8; }, "kdm.f0_dim");
    expect_bad([](Config& c) { c.data.tempo_max = 3.0; }, "data.tempo_min");
    expect_bad([](Config& c) { c.gadm.trans_weight = -1; }, "gadm.trans_weight");
}

TEST(Config, MetricNamesRoundTrip) {
    for (Metric m : {Metric::euclidean, Metric::manhattan, Metric::cosine}) EXPECT_EQ(parse_metric(to_string(m)), m);
}

TEST(Config, LoadFromFile) {
    const auto dir = testutil::scratch_dir("config_load");
    std::ofstream(dir / "c.cfg") << "train.epochs = 5\n";
    EXPECT_EQ(Config::load(dir / "c.cfg").train.epochs, 5);
    EXPECT_THROW(Config::load(dir / "missing.cfg"), ConfigError);
}

TEST(Config, SeedEnvironmentOverride) {
    Config c;
    ::setenv("DISCOVER_SEED", "4242", 1);
    apply_env_overrides(c);
    ::unsetenv("DISCOVER_SEED");
    EXPECT_EQ(c.train.seed, 4242u);
    Config d;
    apply_env_overrides(d);
    EXPECT_EQ(d.train.seed, Config{}.train.seed);
}

TEST(Config, Fnv1aKnownVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}
