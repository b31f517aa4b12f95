#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "seqee/config.hpp"

using namespace seqee;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("key-value parsing with comments and whitespace") {
    const KvConfig cfg = KvConfig::parse(
        "# a comment\n"
        "model.layers = 6\n"
        "  train.lr=1e-3  # trailing comment\n"
        "name = toy run\n"
        "\n");
    CHECK(cfg.get_int("model.layers", 0) == 6);
    CHECK(cfg.get_real("train.lr", 0) == doctest::Approx(1e-3));
    CHECK(cfg.get_str("name", "") == "toy run");
    CHECK(cfg.get_int("absent", 42) == 42);
    CHECK_FALSE(cfg.has("absent"));
}

TEST_CASE("typed getter failures") {
    const KvConfig cfg = KvConfig::parse("x = abc\nflag = maybe\n");
    CHECK_THROWS_AS(cfg.get_int("x", 0), ConfigError);
    CHECK_THROWS_AS(cfg.get_real("x", 0), ConfigError);
    CHECK_THROWS_AS(cfg.get_bool("flag", false), ConfigError);
    CHECK(KvConfig::parse("flag = true\n").get_bool("flag", false));
    CHECK_FALSE(KvConfig::parse("flag = off\n").get_bool("flag", true));
}

TEST_CASE("malformed lines raise ConfigError") {
    CHECK_THROWS_AS(KvConfig::parse("just some words\n"), ConfigError);
    CHECK_THROWS_AS(KvConfig::parse("= value\n"), ConfigError);
}

TEST_CASE("includes resolve relative to the including file, later keys win") {
    const std::string preset = write_temp("seqee_preset.cfg",
                                          "model.layers = 6\n"
                                          "model.hidden = 64\n");
    const std::string main_cfg = write_temp("seqee_main.cfg",
                                            "include seqee_preset.cfg\n"
                                            "model.hidden = 32\n");
    const KvConfig cfg = KvConfig::load_file(main_cfg);
    CHECK(cfg.get_int("model.layers", 0) == 6);   // from the preset
    CHECK(cfg.get_int("model.hidden", 0) == 32);  // overridden after include
    (void)preset;

    const std::string broken = write_temp("seqee_broken.cfg", "include not_there.cfg\n");
    CHECK_THROWS_AS(KvConfig::load_file(broken), ConfigError);
    CHECK_THROWS_AS(KvConfig::load_file("/no/such/file.cfg"), IoError);
}
