#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <vector>

#include "bc/rng.hpp"
#include "bc/store.hpp"
#include "bc/train.hpp"

using namespace bc;

namespace {

struct TempFile {
    std::string path = "model_store_test.bcmp";
    ~TempFile() { std::remove(path.c_str()); }
};

Network random_net(const std::string& arch, PriorKind prior) {
    Network net = init_model(Arch::parse(arch), prior, 5);
    Rng rng(6);
    for (auto& l : net.layers)
        for (Tensor* p : l->params())
            for (double& v : p->data) v += rng.normal();
    return net;
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("round trip is bitwise for every layer type") {
    TempFile tmp;
    for (PriorKind prior : {PriorKind::GNJ, PriorKind::GHS}) {
        for (const char* arch : {"7-5-3", "lenet5"}) {
            Network net = random_net(arch, prior);
            save_model(net, tmp.path);
            LoadedModel back = load_model(tmp.path);
            CHECK(back.net.prior == prior);
            CHECK(back.net.arch.to_string() == arch);
            CHECK(back.net.tau0 == net.tau0);
            CHECK_FALSE(back.masks.has_value());
            REQUIRE(back.net.layers.size() == net.layers.size());
            for (std::size_t li = 0; li < net.layers.size(); ++li) {
                auto orig = net.layers[li]->params();
                auto load = back.net.layers[li]->params();
                REQUIRE(orig.size() == load.size());
                for (std::size_t p = 0; p < orig.size(); ++p)
                    CHECK(orig[p]->data == load[p]->data);
            }
            // Deterministic forward identical pre/post.
            Shape in =
                std::string(arch) == "7-5-3" ? Shape{3, 7} : Shape{2, 28, 28, 1};
            Tensor X = Rng(7).normal_tensor(in);
            Tensor a = net.forward_det(X, net.full_mask());
            Tensor b = back.net.forward_det(X, back.net.full_mask());
            CHECK(a.data == b.data);
        }
    }
}

TEST_CASE("masks round trip") {
    TempFile tmp;
    Network net = random_net("4-3-2", PriorKind::GNJ);
    ModelMask masks{{1, 0, 1, 1}, {0, 1, 1}};
    save_model(net, tmp.path, &masks);
    LoadedModel back = load_model(tmp.path);
    REQUIRE(back.masks.has_value());
    CHECK(*back.masks == masks);
}

TEST_CASE("corruption, truncation, and header errors are distinct") {
    TempFile tmp;
    Network net = random_net("4-3-2", PriorKind::GNJ);
    save_model(net, tmp.path);
    std::vector<char> good = slurp(tmp.path);

    SUBCASE("flipped payload byte -> checksum") {
        auto bad = good;
        bad[bad.size() / 2] ^= 0x40;
        spit(tmp.path, bad);
        CHECK_THROWS_WITH_AS(load_model(tmp.path), doctest::Contains("checksum"), IoError);
    }
    SUBCASE("bad magic") {
        auto bad = good;
        bad[0] = 'X';
        // Keep the checksum consistent so the magic check is what fires.
        std::uint64_t crc =
            crc64(reinterpret_cast<unsigned char*>(bad.data()), bad.size() - 8);
        for (int i = 0; i < 8; ++i) bad[bad.size() - 8 + i] = char(crc >> (8 * i));
        spit(tmp.path, bad);
        CHECK_THROWS_WITH_AS(load_model(tmp.path), doctest::Contains("bad magic"), IoError);
    }
    SUBCASE("version mismatch") {
        auto bad = good;
        bad[4] = 99;
        std::uint64_t crc =
            crc64(reinterpret_cast<unsigned char*>(bad.data()), bad.size() - 8);
        for (int i = 0; i < 8; ++i) bad[bad.size() - 8 + i] = char(crc >> (8 * i));
        spit(tmp.path, bad);
        CHECK_THROWS_WITH_AS(load_model(tmp.path), doctest::Contains("version"), IoError);
    }
    SUBCASE("truncated file") {
        auto bad = good;
        bad.resize(bad.size() / 2);
        spit(tmp.path, bad);
        // Truncation necessarily breaks the trailing checksum first.
        CHECK_THROWS_AS(load_model(tmp.path), IoError);
    }
    SUBCASE("size cap") {
        CHECK_THROWS_WITH_AS(load_model(tmp.path, 16), doctest::Contains("size cap"),
                             IoError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_model("no_such.bcmp"), IoError); }
}
