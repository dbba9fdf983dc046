#include <cstdio>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "focus/serialize.hpp"
#include "test_util.hpp"

using namespace focus;
using namespace focus::testutil;

TEST_CASE("archives round trip bit-exactly") {
    Rng rng(201);
    Archive a;
    a.tensors["alpha"] = randt({3, 4}, rng, -10, 10);
    a.tensors["beta.w"] = randt({2, 2, 5}, rng);
    a.tensors["scalar"] = Tensor::scalar(0.1 + 0.2);  // not exactly representable
    a.tensors["single"] = Tensor::from({2}, {1.00000001, -2.5}, DType::F32);
    a.meta = R"({"step": 17, "note": "round trip"})";

    std::string path = "/tmp/focus_test_archive.bin";
    save_archive(path, a);
    Archive b = load_archive(path);

    REQUIRE(b.tensors.size() == a.tensors.size());
    CHECK(b.meta == a.meta);
    for (const auto& [name, t] : a.tensors) {
        REQUIRE(b.tensors.count(name) == 1);
        const Tensor& u = b.tensors.at(name);
        CHECK(u.shape() == t.shape());
        CHECK(u.dtype() == t.dtype());
        REQUIRE(u.numel() == t.numel());
        CHECK(std::memcmp(u.values().data(), t.values().data(),
                          t.values().size() * sizeof(double)) == 0);
    }
    std::remove(path.c_str());
}

TEST_CASE("saving twice produces identical files") {
    Rng rng(202);
    Archive a;
    a.tensors["x"] = randt({7, 3}, rng);
    a.meta = "{}";
    save_archive("/tmp/focus_arch_a.bin", a);
    save_archive("/tmp/focus_arch_b.bin", a);
    auto slurp = [](const char* p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    CHECK(slurp("/tmp/focus_arch_a.bin") == slurp("/tmp/focus_arch_b.bin"));
    std::remove("/tmp/focus_arch_a.bin");
    std::remove("/tmp/focus_arch_b.bin");
}

TEST_CASE("archive errors are reported") {
    CHECK_THROWS_AS(load_archive("/tmp/focus_does_not_exist.bin"), std::runtime_error);
    {
        std::ofstream f("/tmp/focus_bad.bin", std::ios::binary);
        f << "not an archive at all";
    }
    CHECK_THROWS_AS(load_archive("/tmp/focus_bad.bin"), std::runtime_error);
    // truncation mid-tensor
    Archive a;
    a.tensors["x"] = Tensor::full({64}, 1.0);
    save_archive("/tmp/focus_trunc.bin", a);
    {
        std::ifstream f("/tmp/focus_trunc.bin", std::ios::binary);
        std::string all(std::istreambuf_iterator<char>(f), {});
        std::ofstream g("/tmp/focus_trunc.bin", std::ios::binary | std::ios::trunc);
        g.write(all.data(), static_cast<long>(all.size()) / 2);
    }
    CHECK_THROWS_AS(load_archive("/tmp/focus_trunc.bin"), std::runtime_error);
    std::remove("/tmp/focus_bad.bin");
    std::remove("/tmp/focus_trunc.bin");
}
