#pragma once

// Shared desk-scale fixture for tests that need a trained victim. Built once
// per test binary.

#include "dj/dataset.hpp"
#include "dj/forge.hpp"
#include "dj/model.hpp"

namespace fixtures {

struct Desk {
    dj::Dataset train_pool;  // victim's training half
    dj::Dataset other_half;  // held back for independent negatives
    dj::Dataset test_data;
    dj::Dataset slice;       // 20% stratified finetuning slice
    dj::Model victim;
    dj::TrainConfig train_cfg;
    dj::TrainConfig finetune_cfg;
};

inline const Desk& desk() {
    static const Desk d = [] {
        Desk out;
        dj::Dataset pool = dj::synth_blobs(4, 120, 12, 1001);
        auto halves = dj::split(pool, {0.5, 7});
        out.train_pool = std::move(halves.first);
        out.other_half = std::move(halves.second);
        out.test_data = dj::synth_blobs(4, 40, 12, 2002);
        out.slice = dj::stratified_slice(out.train_pool, 0.2, 77);
        out.train_cfg = {14, 16, 0.05, 0.0, 21};
        out.finetune_cfg = {8, 16, 0.02, 0.0, 31};
        out.victim = dj::train(out.train_cfg, out.train_pool);
        return out;
    }();
    return d;
}

} // namespace fixtures
