#!/usr/bin/env python3
"""Smoke test for the banditpoison extension module.

Builds nothing itself: run `cargo build -p poison-py` first, then
`python3 python/smoke_test.py`. Loads the cdylib straight from the cargo
target directory and exercises each exposed type and function.
"""

import importlib.util
import math
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO / "target" / profile / name
        for profile in ("debug", "release")
        for name in ("libbanditpoison.so", "banditpoison.so", "libbanditpoison.dylib")
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("no built extension found; run `cargo build -p poison-py` first")
    newest = max(built, key=lambda p: p.stat().st_mtime)
    spec = importlib.util.spec_from_file_location("banditpoison", newest)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


bp = load_module()


def expect_value_error(fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except ValueError:
        return
    raise AssertionError(f"{fn} accepted bad input {args} {kwargs}")


# numeric toolkit
assert bp.phi(0.0) == 0.5
assert abs(bp.phi(1.0) - 0.8413447460685429) < 1e-12
for p in (1e-9, 0.025, 0.5, 0.975, 1 - 1e-9):
    assert abs(bp.phi(bp.phi_inv(p)) - p) < 1e-10
expect_value_error(bp.phi_inv, 0.0)
b1 = bp.beta(1, sigma=0.1, k=2, delta=0.05)
b100 = bp.beta(100, sigma=0.1, k=2, delta=0.05)
assert 0 < b100 < b1, "beta must shrink with more observations"
expect_value_error(bp.beta, 0, 0.1, 2, 0.05)

# instance + clean simulation
inst = bp.BanditInstance([0.9, 0.5, 0.0], sigma=0.1, target=2)
assert inst.k == 3 and inst.target == 2 and inst.means[2] == 0.0
expect_value_error(bp.BanditInstance, [0.9, 0.5, 0.0], 0.1, 0)  # target not suboptimal

hist = bp.simulate(inst, algo="ucb", horizon=400, seed=42)
assert hist.horizon == 400 and len(hist) == 400
assert sum(hist.counts) == 400
assert all(c >= 1 for c in hist.counts), "forced initialization pulls every arm"
assert hist.counts[0] > hist.counts[2], "UCB favors the best arm over the worst"
again = bp.simulate(inst, algo="ucb", horizon=400, seed=42)
assert hist.rewards_pre(0) == again.rewards_pre(0), "same seed, same rewards"
expect_value_error(bp.simulate, inst, "exp3", 400, 42)
expect_value_error(hist.pre_mean, 3)

# history CSV round trip
round_tripped = bp.History.from_csv(hist.to_csv())
assert round_tripped.counts == hist.counts
assert round_tripped.rewards_pre(1) == hist.rewards_pre(1)

# hand-built history: 3 pulls at mean 1 vs 1 pull at 0 splits the shift 3:1
tiny = bp.History(2)
for r in (1.0, 1.0, 1.0):
    tiny.push(0, r)
tiny.push(1, 0.0)
plan = bp.attack_eps_greedy(tiny, target=1, xi=0.001)
assert abs(plan.shifts[0] + 0.25025) < 1e-9
assert abs(plan.shifts[1] - 0.75075) < 1e-9
assert abs(plan.objective - plan.cost**2) < 1e-9

# UCB attack on the simulated history: verify is exact
plan = bp.attack_ucb(hist, target=2, xi=0.001, sigma=0.1)
assert plan.feasibility_margin >= -1e-9
assert not plan.suboptimal
assert "UcbMargin" in plan.constraint
poisoned = plan.apply(hist)


def ucb_index(h, arm, t, sigma=0.1):
    return h.post_mean(arm) + 3 * sigma * math.sqrt(math.log(t) / h.count(arm))


for rival in (0, 1):
    gap = ucb_index(poisoned, 2, 401) - ucb_index(poisoned, rival, 401)
    assert gap >= 0.001 - 1e-9, f"target index must beat arm {rival} by xi, got {gap}"
assert poisoned.pre_mean(2) == hist.pre_mean(2), "pre-attack rewards untouched"
record = bp.verify(plan, hist, algo="ucb", sigma=0.1)
assert record and record.success and record.target_probability == 1.0
assert record.std_err is None
csv_text = plan.to_csv(hist)
assert csv_text.startswith("arm,index_within_arm,y,epsilon")

# eps-greedy verification hits its exact ceiling 1 - (K-1)/(K(T+1))
plan = bp.attack_eps_greedy(hist, target=2, xi=0.001)
record = bp.verify(plan, hist, algo="eps-greedy")
ceiling = 1 - (3 - 1) / (3 * (400 + 1))
assert record.success and abs(record.target_probability - ceiling) < 1e-12

# TS attack: Monte Carlo verification with standard error
hist_ts = bp.simulate(inst, algo="ts", horizon=400, seed=7)
plan = bp.attack_ts(hist_ts, target=2, delta=0.05, sigma=0.1, relaxation="chance")
record = bp.verify(plan, hist_ts, algo="ts", sigma=0.1, delta=0.05,
                   mc_samples=20_000, seed=1)
assert record.success, repr(record)
assert record.std_err is not None and record.std_err < 0.01
assert record.target_probability >= 0.95 - 3 * record.std_err
linear = bp.attack_ts(hist_ts, target=2, delta=0.05, sigma=0.1, relaxation="linear")
assert plan.objective <= linear.objective * (1 + 1e-9), \
    "chance constraint never costs more than its linear relaxation"

# online: adaptive attack hijacks the learner, control run does not
duel = bp.BanditInstance([0.5, 0.0], sigma=0.1, target=1)
attacked = bp.run_online_trial(duel, algo="ucb", horizon=3000, seed=3, attack="ace")
assert attacked.target_fraction > 0.9, attacked.target_fraction
assert attacked.cost > 0 and attacked.target_pulls == attacked.counts[1]
control = bp.run_online_trial(duel, algo="ucb", horizon=3000, seed=3, attack="none")
assert control.target_fraction < 0.1, control.target_fraction
assert control.cost == 0.0
assert control.regret >= 0.0

print("smoke test passed:", bp.__name__, "loads and behaves")
