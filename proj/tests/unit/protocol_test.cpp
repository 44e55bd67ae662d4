#include <cmath>
#include <vector>

#include "doctest.h"
#include "overlapsim/error.hpp"
#include "overlapsim/protocol.hpp"
#include "support.hpp"

using namespace overlapsim;
using overlapsim::testing::Gen;
using overlapsim::testing::rel_close;

namespace {

FragmentView whole(std::size_t n) {
  FragmentView f;
  f.index = 0;
  for (std::size_t i = 0; i < n; ++i) f.indices.push_back(i);
  f.byte_size = 4 * n;
  return f;
}

GlobalShardState single_fragment_global(const ParamVector& params) {
  const std::vector<std::size_t> sizes{params.size()};
  return make_global_state(params, partition(sizes, 1));
}

}  // namespace

TEST_SUITE("protocol") {

TEST_CASE("local steps without sync follow plain AdamW") {
  const auto task = overlapsim::testing::least_squares_task(1);
  const auto& shard = task.shard(0);
  AdamWConfig inner;
  inner.lr = 0.01;
  auto worker = make_worker(0, task.initial_params());

  ParamVector oracle = task.initial_params();
  AdamWState state(oracle.size());
  for (int t = 0; t < 100; ++t) {
    local_step(worker, task, shard, inner, inner.lr, batch_seed(shard, t));
    adamw_step(oracle, minibatch_grad(task, shard, oracle, batch_seed(shard, t)).grad, state,
               inner);
  }
  CHECK(worker.params == oracle);
  CHECK(worker.local_step == 100);
}

TEST_CASE("zero gradient keeps params and advances the step") {
  // At the generating parameters with no noise every residual is zero.
  TaskConfig tc;
  tc.kind = TaskKind::least_squares;
  tc.feature_dim = 4;
  tc.num_layers = 2;
  tc.noise_std = 0.0;
  const auto task = make_task(tc, 1);
  AdamWConfig inner;
  inner.weight_decay = 0.0;
  auto worker = make_worker(0, *task.ground_truth());
  for (int t = 0; t < 5; ++t) {
    local_step(worker, task, task.shard(0), inner, inner.lr, batch_seed(task.shard(0), t));
  }
  CHECK(worker.local_step == 5);
  for (std::size_t i = 0; i < worker.params.size(); ++i) {
    CHECK(worker.params[i] == doctest::Approx((*task.ground_truth())[i]).epsilon(1e-12));
  }
}

TEST_CASE("identical shards and seeds give identical workers") {
  TaskConfig tc;
  tc.identical_shards = true;
  const auto task = make_task(tc, 4);
  AdamWConfig inner;
  auto a = make_worker(0, task.initial_params());
  auto b = make_worker(1, task.initial_params());
  for (int t = 0; t < 50; ++t) {
    local_step(a, task, task.shard(0), inner, inner.lr, batch_seed(task.shard(0), t));
    local_step(b, task, task.shard(1), inner, inner.lr, batch_seed(task.shard(1), t));
  }
  CHECK(a.params == b.params);
}

TEST_CASE("pseudo-gradients") {
  const ParamVector g{1.0, 2.0};
  const auto global = single_fragment_global(g);
  auto w = make_worker(0, g);
  CHECK(pseudo_gradient(w, global, whole(2)) == ParamVector{0.0, 0.0});

  std::vector<WorkerState> workers;
  std::vector<GlobalShardState> replicas;
  const std::vector<double> offsets{0.5, -1.0, 2.0};
  for (std::size_t m = 0; m < offsets.size(); ++m) {
    workers.push_back(make_worker(static_cast<int>(m), g + ParamVector{offsets[m], offsets[m]}));
    replicas.push_back(global);
  }
  const auto sync = initiate_sync(workers, replicas, whole(2), 100, 5, false);
  CHECK(sync.completes_at_step == 105);
  CHECK(sync.tau() == 5);
  for (std::size_t m = 0; m < offsets.size(); ++m) {
    CHECK(sync.contributions[m] == ParamVector{offsets[m], offsets[m]});
  }
  CHECK(workers[0].snapshots.empty());
}

TEST_CASE("aggregation is the mean") {
  InFlightSync same;
  same.contributions = {ParamVector{0.3, -1.0}, ParamVector{0.3, -1.0}};
  CHECK(aggregate(same, 2) == ParamVector{0.3, -1.0});

  InFlightSync four;
  for (double v : {1.0, 2.0, 3.0, 4.0}) four.contributions.push_back(ParamVector{v, v});
  CHECK(aggregate(four, 4) == ParamVector{2.5, 2.5});

  InFlightSync flipped;
  for (double v : {4.0, 2.0, 1.0, 3.0}) flipped.contributions.push_back(ParamVector{v, v});
  CHECK(aggregate(flipped, 4) == aggregate(four, 4));

  CHECK_THROWS_AS(aggregate(four, 3), InternalError);
}

TEST_CASE("blending") {
  const ParamVector local{2.0, -1.0};
  const ParamVector global{4.0, 0.3};
  CHECK(blend(local, global, 1.0) == global);
  CHECK(blend(local, global, 0.0) == local);
  CHECK(blend(ParamVector{2.0}, ParamVector{4.0}, 0.5) == ParamVector{3.0});

  // alpha = 0: worker untouched while the replica still moves.
  auto worker = make_worker(0, local);
  auto replica = single_fragment_global(ParamVector{0.0, 0.0});
  InFlightSync sync;
  sync.aggregated = ParamVector{1.0, 1.0};
  complete_sync_baseline(worker, sync, replica, whole(2), 0.0, NesterovConfig{1.0, 0.0});
  CHECK(worker.params == local);
  CHECK(replica.fragments[0].params == ParamVector{1.0, 1.0});
}

TEST_CASE("compensation hand example") {
  const auto out = compensate(ParamVector{0.8}, ParamVector{1.0}, ParamVector{1.1}, 0.5, 100, 5,
                              false);
  // d = -0.2, g = -0.04, div = 0.001, g_corr = -0.0399992
  CHECK(rel_close(out[0], 1.1 + 5.0 * -0.0399992, 1e-12));
  CHECK(rel_close(out[0], 0.900004, 1e-12));
}

TEST_CASE("compensation with the literal sign flips the rate") {
  const auto out = compensate(ParamVector{0.8}, ParamVector{1.0}, ParamVector{1.1}, 0.5, 100, 5,
                              true);
  // g = +0.04: the correction is unchanged (g squared), the displacement flips.
  CHECK(rel_close(out[0], 1.1 + 0.2 + 5.0 * 0.5 * 0.0016 * 0.001, 1e-12));
}

TEST_CASE("property: compensation zero cases") {
  Gen gen(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = gen.coin() ? 1 : static_cast<std::size_t>(gen.integer(2, 40));
    const ParamVector now = gen.vec(n);
    const ParamVector init = gen.vec(n);
    const ParamVector global = gen.vec(n);
    const int tau = gen.integer(1, 20);
    const int h = gen.integer(tau, 500);
    const bool literal = gen.coin();

    const auto zero_lambda = compensate(now, init, global, 0.0, h, tau, literal);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = literal ? init[i] - now[i] : now[i] - init[i];
      REQUIRE(zero_lambda[i] == global[i] + d);
    }

    // No divergence: the global fragment equals the snapshot.
    const double lambda = gen.real(0.0, 5.0);
    CHECK(compensate(now, init, init, lambda, h, tau, literal) ==
          compensate(now, init, init, 0.0, h, tau, literal));
  }
}

TEST_CASE("delay compensation consumes the matching snapshot") {
  const ParamVector g{1.1};
  auto replica = single_fragment_global(g);
  std::vector<WorkerState> workers{make_worker(0, ParamVector{1.0})};
  std::vector<GlobalShardState> replicas{single_fragment_global(ParamVector{1.0})};
  auto sync = initiate_sync(workers, replicas, whole(1), 10, 5, true);
  REQUIRE(workers[0].snapshots.count(0) == 1);
  CHECK_THROWS_AS(initiate_sync(workers, replicas, whole(1), 11, 5, true), InternalError);

  workers[0].params = ParamVector{0.8};
  delay_compensate(workers[0], sync, replica, whole(1), 0.5, 100, false);
  CHECK(rel_close(workers[0].params[0], 0.900004, 1e-12));
  CHECK(workers[0].snapshots.empty());
  CHECK_THROWS_AS(delay_compensate(workers[0], sync, replica, whole(1), 0.5, 100, false),
                  InternalError);
}

TEST_CASE("method resolution") {
  ProtocolConfig p;
  p.method = Method::diloco;
  const auto d = p.resolved();
  CHECK(d.K == 1);
  CHECK(d.blocking);
  CHECK(d.alpha == 1.0);
  CHECK_FALSE(d.compensation);

  p.method = Method::streaming_diloco;
  CHECK(p.resolved().selection == Selection::round_robin);
  CHECK_FALSE(p.resolved().compensation);

  ProtocolConfig bad;
  bad.blocking = true;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_method("cocodc") == Method::cocodc);
  CHECK_THROWS_AS(parse_method("async"), ConfigError);
}

}
