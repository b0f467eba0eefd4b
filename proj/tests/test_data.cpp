#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "data/dataset.hpp"
#include "support/errors.hpp"
#include "support/hash.hpp"
#include "support/rng.hpp"

using namespace fiplab;
namespace fs = std::filesystem;

namespace {

data::PoisonPlan default_plan(std::uint64_t seed = 5) {
    data::PoisonPlan plan;
    plan.trigger.kind = data::TriggerKind::patch;
    plan.trigger.row = 13;
    plan.trigger.col = 13;
    plan.trigger.size = 3;
    plan.trigger.value = 1.0;
    plan.trigger.epsilon = 1.0;
    plan.poison_rate = 0.1;
    plan.label_map = data::LabelMapKind::all2one;
    plan.target = 0;
    plan.seed = seed;
    return plan;
}

}  // namespace

TEST_CASE("noiseless synthetic classes are pixel-identical") {
    data::LabeledDataset ds = data::gen_synthetic(3, 5, 16, 0.0, 7);
    for (int k = 0; k < 3; ++k) {
        const auto& first = ds.images[k * 5];
        for (int i = 1; i < 5; ++i) {
            CHECK(ds.images[k * 5 + i] == first);
        }
    }
}

TEST_CASE("synthetic generation is bit-reproducible") {
    data::LabeledDataset a = data::gen_synthetic(3, 20, 16, 0.25, 99);
    data::LabeledDataset b = data::gen_synthetic(3, 20, 16, 0.25, 99);
    CHECK(data::dataset_checksum(a) == data::dataset_checksum(b));
    data::LabeledDataset c = data::gen_synthetic(3, 20, 16, 0.25, 100);
    CHECK(data::dataset_checksum(a) != data::dataset_checksum(c));
}

TEST_CASE("synthetic pixels live on the 1/255 grid in [0,1]") {
    data::LabeledDataset ds = data::gen_synthetic(2, 10, 16, 0.25, 3);
    for (const auto& img : ds.images) {
        for (double p : img) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            const double scaled = p * 255.0;
            CHECK(std::fabs(scaled - std::round(scaled)) < 1e-9);
        }
    }
}

TEST_CASE("idx round trip preserves the dataset bit-exactly") {
    const fs::path dir = fs::temp_directory_path() / "fiplab_idx_test";
    fs::create_directories(dir);
    data::LabeledDataset ds = data::gen_synthetic(3, 10, 16, 0.25, 42);
    data::save_idx(ds, dir / "im.idx", dir / "lb.idx");
    data::LabeledDataset back = data::load_idx(dir / "im.idx", dir / "lb.idx");
    REQUIRE(back.size() == ds.size());
    CHECK(back.height == ds.height);
    CHECK(back.width == ds.width);
    CHECK(back.labels == ds.labels);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.images[i] == ds.images[i]);
    }
    fs::remove_all(dir);
}

TEST_CASE("hand-written idx bytes decode to the expected pixels") {
    const fs::path dir = fs::temp_directory_path() / "fiplab_idx_hand";
    fs::create_directories(dir);
    {
        std::ofstream img(dir / "im.idx", std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2};
        img.write(reinterpret_cast<const char*>(header), sizeof(header));
        const unsigned char pixels[] = {0, 128, 255, 64};
        img.write(reinterpret_cast<const char*>(pixels), sizeof(pixels));
    }
    {
        std::ofstream lbl(dir / "lb.idx", std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 1, 0, 0, 0, 1};
        lbl.write(reinterpret_cast<const char*>(header), sizeof(header));
        const unsigned char labels[] = {0};
        lbl.write(reinterpret_cast<const char*>(labels), sizeof(labels));
    }
    data::LabeledDataset ds = data::load_idx(dir / "im.idx", dir / "lb.idx");
    REQUIRE(ds.size() == 1);
    CHECK(ds.images[0][0] == 0.0);
    CHECK(ds.images[0][1] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
    CHECK(ds.images[0][2] == 1.0);
    CHECK(ds.images[0][3] == doctest::Approx(64.0 / 255.0).epsilon(1e-15));
    fs::remove_all(dir);
}

TEST_CASE("idx loader reports wrong magic, truncation and count mismatches") {
    const fs::path dir = fs::temp_directory_path() / "fiplab_idx_bad";
    fs::create_directories(dir);
    data::LabeledDataset ds = data::gen_synthetic(2, 5, 8, 0.1, 1);
    data::save_idx(ds, dir / "im.idx", dir / "lb.idx");

    // Image magic in the label file.
    {
        std::ofstream lbl(dir / "bad_magic.idx", std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, 10};
        lbl.write(reinterpret_cast<const char*>(header), sizeof(header));
    }
    CHECK_THROWS_WITH_AS(data::load_idx(dir / "im.idx", dir / "bad_magic.idx"),
                         doctest::Contains("wrong magic"), Error);

    // Count mismatch: rewrite the label header with a different count.
    {
        std::ifstream in(dir / "lb.idx", std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        bytes[7] = static_cast<char>(9);
        std::ofstream out(dir / "mismatch.idx", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_WITH_AS(data::load_idx(dir / "im.idx", dir / "mismatch.idx"),
                         doctest::Contains("mismatch"), Error);

    // Truncated image payload.
    {
        std::ifstream in(dir / "im.idx", std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        std::ofstream out(dir / "trunc.idx", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_WITH_AS(data::load_idx(dir / "trunc.idx", dir / "lb.idx"),
                         doctest::Contains("truncated"), Error);
    fs::remove_all(dir);
}

TEST_CASE("patch trigger: exact pixel count changes, empty trigger is identity") {
    data::LabeledDataset ds = data::gen_synthetic(2, 3, 16, 0.2, 11);
    data::TriggerSpec patch;
    patch.kind = data::TriggerKind::patch;
    patch.row = 13;
    patch.col = 13;
    patch.size = 3;
    patch.value = 1.0;

    const auto& x = ds.images[0];
    const auto xb = data::apply_trigger(x, 16, 16, patch);
    int diff = 0;
    for (std::size_t p = 0; p < x.size(); ++p) {
        if (x[p] != xb[p]) {
            ++diff;
        }
    }
    // At most 9 pixels differ; pixels that were already white stay put.
    CHECK(diff <= 9);
    int changed_region = 0;
    for (int r = 13; r < 16; ++r) {
        for (int c = 13; c < 16; ++c) {
            CHECK(xb[r * 16 + c] == 1.0);
            ++changed_region;
        }
    }
    CHECK(changed_region == 9);
    // All outside pixels bit-identical.
    for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
            if (r >= 13 && c >= 13) {
                continue;
            }
            CHECK(xb[r * 16 + c] == x[r * 16 + c]);
        }
    }

    data::TriggerSpec empty = patch;
    empty.size = 0;
    CHECK(data::apply_trigger(x, 16, 16, empty) == x);

    data::TriggerSpec oob = patch;
    oob.row = 14;
    CHECK_THROWS_AS(data::apply_trigger(x, 16, 16, oob), Error);
}

TEST_CASE("patch trigger forces exactly 9 differing pixels on a dark image") {
    std::vector<double> x(16 * 16, 0.25);
    data::TriggerSpec patch;
    patch.kind = data::TriggerKind::patch;
    patch.row = 13;
    patch.col = 13;
    patch.size = 3;
    patch.value = 1.0;
    const auto xb = data::apply_trigger(x, 16, 16, patch);
    int diff = 0;
    for (std::size_t p = 0; p < x.size(); ++p) {
        if (x[p] != xb[p]) {
            ++diff;
        }
    }
    CHECK(diff == 9);
}

TEST_CASE("blend trigger mixes pointwise and alpha=0 is identity") {
    std::vector<double> x(16, 0.5);
    data::TriggerSpec blend;
    blend.kind = data::TriggerKind::blend;
    blend.blend_pattern.assign(16, 1.0);
    blend.alpha = 0.2;
    const auto xb = data::apply_trigger(x, 4, 4, blend);
    for (double v : xb) {
        CHECK(v == doctest::Approx(0.8 * 0.5 + 0.2 * 1.0).epsilon(1e-15));
    }
    blend.alpha = 0.0;
    CHECK(data::apply_trigger(x, 4, 4, blend) == x);
}

TEST_CASE("poison selects the exact count, reproducibly, others untouched") {
    data::LabeledDataset ds = data::gen_synthetic(4, 250, 16, 0.25, 21);  // N = 1000
    data::PoisonPlan plan = default_plan(77);
    auto [p1, bk1] = data::poison(ds, plan);
    auto [p2, bk2] = data::poison(ds, plan);
    CHECK(bk1.records.size() == 100);
    CHECK(data::dataset_checksum(p1) == data::dataset_checksum(p2));

    std::set<std::size_t> chosen;
    for (const auto& rec : bk1.records) {
        chosen.insert(rec.index);
        CHECK(rec.assigned_label == plan.target);
        CHECK(p1.labels[rec.index] == plan.target);
        CHECK(rec.original_label == ds.labels[rec.index]);
    }
    CHECK(chosen.size() == 100);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!chosen.count(i)) {
            CHECK(p1.images[i] == ds.images[i]);
            CHECK(p1.labels[i] == ds.labels[i]);
        }
    }

    // Max-norm of every poisoned perturbation obeys the declared bound.
    CHECK(bk1.realized_epsilon <= plan.trigger.epsilon);
    for (const auto& rec : bk1.records) {
        double worst = 0.0;
        for (std::size_t p = 0; p < ds.images[rec.index].size(); ++p) {
            worst = std::max(worst,
                             std::fabs(p1.images[rec.index][p] - ds.images[rec.index][p]));
        }
        CHECK(worst <= plan.trigger.epsilon);
    }
}

TEST_CASE("poison rate 0 is a bit-exact no-op") {
    data::LabeledDataset ds = data::gen_synthetic(3, 10, 16, 0.25, 2);
    data::PoisonPlan plan = default_plan();
    plan.poison_rate = 0.0;
    auto [p, bk] = data::poison(ds, plan);
    CHECK(bk.records.empty());
    CHECK(data::dataset_checksum(p) == data::dataset_checksum(ds));
}

TEST_CASE("all2all maps class c to c+1 mod C") {
    data::LabeledDataset ds = data::gen_synthetic(10, 3, 16, 0.0, 3);
    data::PoisonPlan plan = default_plan();
    plan.label_map = data::LabelMapKind::all2all;
    plan.poison_rate = 1.0;
    auto [p, bk] = data::poison(ds, plan);
    for (const auto& rec : bk.records) {
        CHECK(rec.assigned_label == (rec.original_label + 1) % 10);
    }
    // Classes 8 and 9 map to 9 and 0.
    CHECK(data::mapped_label(plan, 8, 10) == 9);
    CHECK(data::mapped_label(plan, 9, 10) == 0);
}

TEST_CASE("stratified split: sizes, disjointness, exhaustiveness") {
    data::LabeledDataset ds = data::gen_synthetic(3, 500, 16, 0.25, 4);
    data::SplitSpec spec;
    spec.fraction = 0.01;
    data::SplitResult result = data::split(ds, spec, 9);
    CHECK(result.val.size() == 15);  // ceil(0.01 * 500) = 5 per class
    CHECK(result.train.size() + result.val.size() == ds.size());
    for (int k = 0; k < 3; ++k) {
        int count = 0;
        for (std::size_t i = 0; i < result.val.size(); ++i) {
            if (result.val.labels[i] == k) {
                ++count;
            }
        }
        CHECK(count == 5);
    }
    std::set<std::size_t> train_set(result.train_indices.begin(), result.train_indices.end());
    for (std::size_t i : result.val_indices) {
        CHECK(!train_set.count(i));
    }
    CHECK(train_set.size() + result.val_indices.size() == ds.size());

    // One-shot mode.
    data::SplitSpec one_shot;
    one_shot.per_class = 1;
    data::SplitResult os = data::split(ds, one_shot, 9);
    CHECK(os.val.size() == 3);
    for (int k = 0; k < 3; ++k) {
        int count = 0;
        for (std::size_t i = 0; i < os.val.size(); ++i) {
            if (os.val.labels[i] == k) {
                ++count;
            }
        }
        CHECK(count == 1);
    }
}

TEST_CASE("split rejects fractions that empty a class") {
    data::LabeledDataset ds = data::gen_synthetic(2, 2, 8, 0.0, 1);
    data::SplitSpec spec;
    spec.fraction = 0.9;  // ceil(0.9*2)=2 would leave the class empty
    CHECK_THROWS_AS(data::split(ds, spec, 1), Error);
}

TEST_CASE("triggered eval set excludes the target class for all2one") {
    data::LabeledDataset test = data::gen_synthetic(3, 10, 16, 0.1, 6);
    data::PoisonPlan plan = default_plan();
    auto [triggered, bk] = data::make_triggered_eval_set(test, plan);
    CHECK(triggered.size() == 20);  // class 0 removed
    for (const auto& rec : bk.records) {
        CHECK(rec.original_label != plan.target);
        CHECK(rec.assigned_label == plan.target);
    }
    // Ground-truth labels restore the originals.
    const auto gt = data::ground_truth_labels(triggered, bk);
    for (const auto& rec : bk.records) {
        CHECK(gt[rec.index] == rec.original_label);
    }
}
