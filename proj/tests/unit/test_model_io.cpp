#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "apcvfl/error.hpp"
#include "apcvfl/model_io.hpp"

using namespace apcvfl;

TEST_SUITE("model_io") {
  TEST_CASE("models round-trip bit-exactly") {
    const Autoencoder ae =
        build_autoencoder(ArchitectureSpec::for_role(EncoderRole::LocalActive, 5), 3);
    const Mlp* models[] = {&ae.encoder, &ae.decoder};
    const auto bytes = serialize_models(models);
    const auto back = deserialize_models(bytes);
    REQUIRE(back.size() == 2);
    CHECK(back[0] == ae.encoder);
    CHECK(back[1] == ae.decoder);

    // Magic, version, count.
    CHECK(bytes[0] == 'A');
    CHECK(bytes[3] == 'M');
    CHECK(bytes[4] == kModelFileVersion);
    CHECK(bytes[8] == 2);

    const auto dir = std::filesystem::temp_directory_path() / "apcvfl_test_model_io";
    std::filesystem::create_directories(dir);
    save_autoencoder(dir / "ae.bin", ae);
    CHECK(load_autoencoder(dir / "ae.bin") == ae);
    save_mlp(dir / "enc.bin", ae.encoder);
    CHECK(load_mlp(dir / "enc.bin") == ae.encoder);
    CHECK_THROWS_AS(load_mlp(dir / "ae.bin"), ParseError);
    CHECK_THROWS_AS(load_mlp(dir / "absent.bin"), ParseError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("corrupt files are parse errors") {
    const Mlp m = Mlp::make(std::vector<std::size_t>{2, 3}, Activation::Selu, Activation::Identity, 1);
    const Mlp* models[] = {&m};
    const auto good = serialize_models(models);

    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_models(bad), ParseError);
    bad = good;
    bad[4] = 7;
    CHECK_THROWS_AS(deserialize_models(bad), ParseError);
    bad = good;
    bad.resize(bad.size() - 1);
    CHECK_THROWS_AS(deserialize_models(bad), ParseError);
    bad = good;
    bad.push_back(0);
    CHECK_THROWS_AS(deserialize_models(bad), ParseError);
  }

  TEST_CASE("an autoencoder file must chain encoder into decoder") {
    const Mlp a = Mlp::make(std::vector<std::size_t>{2, 3}, Activation::Selu, Activation::Selu, 1);
    const Mlp b = Mlp::make(std::vector<std::size_t>{4, 2}, Activation::Selu, Activation::Identity, 2);
    const Mlp* models[] = {&a, &b};
    const auto bytes = serialize_models(models);
    const auto path = std::filesystem::temp_directory_path() / "apcvfl_test_chain.bin";
    {
      std::ofstream out(path, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_autoencoder(path), ParseError);
    std::filesystem::remove(path);
  }
}
