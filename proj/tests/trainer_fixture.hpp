#pragma once

#include "cgmatch/trainer.hpp"

namespace cgmatch::testing {

// A few hundred iterations on a small problem; runs in well under a second.
inline trainer::RunConfig tiny_config(trainer::Method method = trainer::Method::CGMatch) {
    trainer::RunConfig c;
    c.data.kind = datasets::Kind::Blobs;
    c.data.blobs.n_unlabeled = 120;
    c.data.blobs.n_test = 80;
    c.data.blobs.dim = 4;
    c.data.blobs.spread = 3.0;
    c.hidden = {12};
    c.method = method;
    c.iterations = 200;
    c.warmup = 40;
    c.warmup_window = 20;
    c.batch_labeled = 8;
    c.ratio = 4;
    c.eval_every = 25;
    c.checkpoint_every = 50;
    c.partition_log_every = 10;
    c.ema_momentum = 0.9;
    return c;
}

}  // namespace cgmatch::testing
