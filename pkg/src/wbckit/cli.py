"""Command-line entry point.

Four subcommands: `run` executes a scenario file and writes trajectory logs,
`bench` sweeps robot DOF and reports per-phase timings for both controller
formulations, `validate` exercises the library invariants on random states,
and `gen-model` emits generated humanoid models as JSON.  `plot-data`
reshapes a benchmark CSV into gnuplot-ready columns.
"""

from __future__ import annotations

import json
import os
import platform
import sys
import time
from datetime import datetime, timezone

import click
import numpy as np

from .controller import (
    CONVENTIONAL,
    REDUCED,
    ContactSpec,
    ControllerConfig,
    TaskSpec,
    Trajectory,
    WholeBodyController,
    default_scenario,
    load_scenario,
)
from .controller import COM_POSITION, FRAME_POSE
from .dynamics import Workspace
from .model import (
    HumanoidParams,
    RobotState,
    generate_humanoid,
    model_to_json,
    standing_state,
    sweep_params,
)
from .sim import run_scenario, tracking_summary


@click.group()
def main():
    """Whole-body control toolkit."""


# ---------------------------------------------------------------------------
# wbc run


@main.command("run")
@click.option("--scenario", "scenario_path", required=True, help="Scenario JSON file.")
@click.option(
    "--method",
    type=click.Choice([CONVENTIONAL, REDUCED, "both"]),
    default="both",
    show_default=True,
)
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--log-every", default=1, show_default=True)
def cmd_run(scenario_path, method, out_dir, log_every):
    """Run a closed-loop scenario and write CSV logs plus a summary JSON."""
    if not os.path.exists(scenario_path):
        click.echo(f"error: scenario file not found: {scenario_path}", err=True)
        sys.exit(2)
    with open(scenario_path) as fh:
        text = fh.read()
    try:
        scenario = load_scenario(text)
    except FileNotFoundError as e:
        click.echo(f"error: model file not found: {e.filename}", err=True)
        sys.exit(2)
    except Exception as e:
        click.echo(f"error: cannot parse scenario: {e}", err=True)
        sys.exit(2)

    os.makedirs(out_dir, exist_ok=True)
    methods = [CONVENTIONAL, REDUCED] if method == "both" else [method]
    summaries = {}
    for m in methods:
        try:
            log = run_scenario(scenario, method=m, log_every=log_every)
        except Exception as e:
            click.echo(f"error: controller failed ({m}): {e}", err=True)
            sys.exit(1)
        log.to_csv(os.path.join(out_dir, f"{scenario.name}_{m}.csv"))
        summaries[m] = tracking_summary(log)
        click.echo(f"{m}: wrote {scenario.name}_{m}.csv")

    summary = {"scenario": scenario.name, "methods": summaries}
    if len(methods) == 2:
        err_ratio = {}
        for task in summaries[CONVENTIONAL]["tasks"]:
            a = summaries[CONVENTIONAL]["tasks"][task]["max_err"]
            b = summaries[REDUCED]["tasks"][task]["max_err"]
            err_ratio[task] = a / b if b else float("inf")
        ta = summaries[CONVENTIONAL]["timing_us"].get("total_us", 0.0)
        tb = summaries[REDUCED]["timing_us"].get("total_us", 0.0)
        summary["comparison"] = {
            "max_err_ratio_conventional_over_reduced": err_ratio,
            "timing_ratio_conventional_over_reduced": ta / tb if tb else None,
        }
    with open(os.path.join(out_dir, f"{scenario.name}_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    click.echo(f"wrote {scenario.name}_summary.json")


# ---------------------------------------------------------------------------
# wbc bench


BENCH_COLUMNS = [
    "method",
    "n",
    "support_type",
    "c",
    "k",
    "t_dyn_us",
    "t_lqp1_us",
    "t_lqp2_us",
    "t_total_avg_us",
    "t_total_max_us",
    "ratio_vs_conventional",
]


def _bench_scenario(n, support):
    """Stance scenario for one sweep point; single support drops the right
    foot contact and tracks it as a swing-foot pose task instead."""
    sc = default_scenario(n, com_amp=0.0, duration=5.0)
    if support == "single":
        sc.contacts = [c for c in sc.contacts if c.link != "r_foot"]
        sc.tasks.append(
            TaskSpec(kind=FRAME_POSE, priority=2, link="r_foot", kp=100.0, kd=20.0)
        )
    return sc


def _state_stream(model, n_ticks, dt, seed=0):
    """Deterministic smooth joint-space motion around the standing pose.

    Both methods are timed over the exact same states so the comparison is
    free of closed-loop coupling between controller output and input.
    """
    rng = np.random.default_rng(seed)
    base = standing_state(model)
    amp = 0.02 * rng.standard_normal(model.n)
    phase = rng.uniform(0.0, 2.0 * np.pi, model.n)
    w = 2.0 * np.pi * 0.5
    states = []
    for k in range(n_ticks):
        t = k * dt
        s = base.copy()
        s.q[7:] += amp * np.sin(w * t + phase)
        s.qd[6:] = amp * w * np.cos(w * t + phase)
        states.append(s)
    return states


def _time_method(scenario, method, states, warmup, reps):
    """Median-of-means phase timings (µs) for one controller over a stream."""
    means = []
    total_max = 0.0
    for _ in range(reps):
        ctl = WholeBodyController(
            scenario.model,
            scenario.tasks,
            scenario.contacts,
            scenario.limits,
            ControllerConfig(method=method),
        )
        phases = {"dyn_us": [], "lqp1_us": [], "lqp2_us": [], "total_us": []}
        for i, s in enumerate(states):
            cmd = ctl.tick(s, i * scenario.dt)
            if i < warmup:
                continue
            for key in phases:
                phases[key].append(cmd.timings_us[key])
        means.append({k: float(np.mean(v)) for k, v in phases.items()})
        total_max = max(total_max, float(np.max(phases["total_us"])))
    med = {k: float(np.median([m[k] for m in means])) for k in means[0]}
    med["total_max_us"] = total_max
    return med


def _parse_dof_range(text):
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(text)]


@main.command("bench")
@click.option("--dof", default="20:45", show_default=True, help="Range lo:hi or single n.")
@click.option(
    "--support",
    "supports",
    type=click.Choice(["single", "double"]),
    multiple=True,
    default=("double",),
    show_default=True,
)
@click.option("--reps", default=1, show_default=True, help="Repetitions (median-of-means).")
@click.option("--ticks", default=1000, show_default=True, help="Measured ticks per rep.")
@click.option("--warmup", default=100, show_default=True)
@click.option("--check", is_flag=True, help="Assert the speedup trend.")
@click.option("--out", "out_dir", default=".", show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_bench(dof, supports, reps, ticks, warmup, check, out_dir, seed):
    """DOF-sweep timing comparison of the two controller formulations."""
    if reps < 1:
        click.echo("error: --reps must be at least 1", err=True)
        sys.exit(2)
    try:
        ns = _parse_dof_range(dof)
    except ValueError:
        click.echo(f"error: cannot parse --dof {dof!r}", err=True)
        sys.exit(2)
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    ratios = {}
    for n in ns:
        for support in supports:
            try:
                sc = _bench_scenario(n, support)
            except Exception as e:
                click.echo(f"error: model generator failed for n={n}: {e}", err=True)
                sys.exit(2)
            c = len(sc.contacts)
            k = 3 - c  # support-phase index convention: swinging feet + 1
            states = _state_stream(sc.model, warmup + ticks, sc.dt, seed=seed)
            timed = {}
            for method in (CONVENTIONAL, REDUCED):
                timed[method] = _time_method(sc, method, states, warmup, reps)
            ratio = timed[CONVENTIONAL]["total_us"] / timed[REDUCED]["total_us"]
            ratios.setdefault(support, {})[n] = ratio
            for method in (CONVENTIONAL, REDUCED):
                tm = timed[method]
                rows.append(
                    [
                        method,
                        n,
                        support,
                        c,
                        k,
                        round(tm["dyn_us"], 2),
                        round(tm["lqp1_us"], 2),
                        round(tm["lqp2_us"], 2),
                        round(tm["total_us"], 2),
                        round(tm["total_max_us"], 2),
                        round(ratio if method == REDUCED else 1.0, 4),
                    ]
                )
            ctl = WholeBodyController(
                sc.model, sc.tasks, sc.contacts, sc.limits, ControllerConfig()
            )
            cmd = ctl.tick(states[0], 0.0)
            dims = [lv.dim for lv in (cmd.solution1, cmd.solution2) if lv is not None]
            click.echo(
                f"n={n} {support}: c={c} conventional dim {sc.model.n + 6 + 6 * c},"
                f" staged dims {'/'.join(str(d) for d in dims)},"
                f" ratio {ratio:.2f}"
            )

    csv_path = os.path.join(out_dir, "bench.csv")
    with open(csv_path, "w") as fh:
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    report = {
        "columns": BENCH_COLUMNS,
        "rows": rows,
        "environment": {
            "cpu": platform.processor() or platform.machine(),
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        },
    }
    with open(os.path.join(out_dir, "bench.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    click.echo(f"wrote {csv_path} and bench.json")

    if check:
        failures = []
        for support, by_n in ratios.items():
            if 33 in by_n and by_n[33] < 1.5:
                failures.append(f"{support}: ratio at n=33 is {by_n[33]:.2f} < 1.5")
            if 20 in by_n and 45 in by_n and by_n[45] < by_n[20]:
                failures.append(
                    f"{support}: ratio(45)={by_n[45]:.2f} < ratio(20)={by_n[20]:.2f}"
                )
        if failures:
            for f in failures:
                click.echo(f"trend check FAILED: {f}", err=True)
            sys.exit(1)
        click.echo("trend check passed")


# ---------------------------------------------------------------------------
# wbc validate


def _suite_spatial(rng, trials):
    from .spatial import PluckerTransform, compose, crf, crm

    worst = 0.0
    for _ in range(trials):
        quat = rng.standard_normal(4)
        quat /= np.linalg.norm(quat)
        from .model import quat_to_rot

        x = PluckerTransform(rot=quat_to_rot(quat), trans=rng.standard_normal(3))
        m = x.matrix()
        worst = max(worst, np.abs(compose(x, x.inverse()).matrix() - np.eye(6)).max())
        # force transform is the inverse-transpose of the motion transform
        worst = max(
            worst, np.abs(x.force_matrix() - np.linalg.inv(m).T).max()
        )
        v = rng.standard_normal(6)
        worst = max(worst, np.abs(crf(v) + crm(v).T).max())
    return worst, 1e-9


def _suite_dynamics(rng, trials):
    from .model import generate_humanoid, sweep_params

    model = generate_humanoid(sweep_params(24))
    worst = 0.0
    for _ in range(max(1, trials // 10)):
        s = model.random_state(rng)
        ws = Workspace(model, s)
        # mass matrix symmetric positive definite
        worst = max(worst, np.abs(ws.M - ws.M.T).max())
        if np.linalg.eigvalsh(ws.M)[0] <= 0:
            worst = max(worst, 1.0)
        # centroidal momentum equals the sum of link momenta about the COM
        cq = ws.centroidal()
        worst = max(worst, np.abs(cq.A @ s.qd - cq.momentum).max())
    return worst, 1e-8


def _suite_reduction(rng, trials):
    from .controller import contact_stack
    from .model import foot_sole_offset, generate_humanoid, sweep_params
    from .reduction import build_reduction, partition_chains

    model = generate_humanoid(sweep_params(33))
    off = foot_sole_offset(model)
    contacts = [ContactSpec(link=l, offset=off) for l in ("l_foot", "r_foot")]
    partition = partition_chains(model, [c.link for c in contacts])
    base = standing_state(model)
    worst = 0.0
    for _ in range(max(1, trials // 10)):
        s = base.copy()
        s.q[7:] += 0.2 * rng.standard_normal(model.n)
        s.qd[:] = 0.3 * rng.standard_normal(model.nv)
        ws = Workspace(model, s)
        jc, _ = contact_stack(ws, contacts)
        red = build_reduction(model, s, partition, ws, jc, debug_check=True)
        nt = red.N_r_T
        worst = max(worst, np.abs(nt @ nt - nt).max())  # projector idempotence
        worst = max(worst, np.abs(red.J_r @ nt.T).max())  # annihilation
        worst = max(
            worst, np.abs(red.Jbar_r_T @ ws.M - red.M_r @ red.J_r).max() / ws.M.max()
        )  # dynamic consistency
        cq = ws.centroidal()
        hr = red.M_r @ (red.J_r @ s.qd)
        worst = max(
            worst,
            np.abs(hr[red.centroidal_rows()] - cq.momentum).max()
            / max(1.0, np.abs(cq.momentum).max()),
        )  # centroidal momentum carried exactly by the reduced coordinates
    return worst, 1e-6


def _suite_lqp(rng, trials):
    from .lqp import QpProblem, brute_force_reference, solve_qp

    worst = 0.0
    for _ in range(max(10, trials)):
        d = int(rng.integers(2, 7))
        m = int(rng.integers(1, 8))
        h = rng.standard_normal((d, d))
        h = h @ h.T + 0.1 * np.eye(d)
        f = rng.standard_normal(d)
        a = rng.standard_normal((m, d))
        lo = np.full(m, -np.inf)
        up = rng.uniform(0.2, 1.5, m)
        two = rng.random(m) < 0.4
        lo[two] = -rng.uniform(0.2, 1.5, two.sum())
        prob = QpProblem(H=h, f=f, A=a, lower=lo, upper=up)
        ref = brute_force_reference(prob)
        res = solve_qp(prob)
        if ref is None:
            continue
        if res.status != "optimal":
            worst = max(worst, 1.0)
            continue
        obj = lambda x: 0.5 * x @ h @ x + f @ x
        worst = max(worst, abs(obj(res.x) - obj(ref)))
    return worst, 1e-5


def _suite_controller(rng, trials):
    sc = default_scenario(33)
    ctl = WholeBodyController(
        sc.model, sc.tasks, sc.contacts, sc.limits, ControllerConfig()
    )
    cmd = ctl.tick(standing_state(sc.model), 0.0)
    c = len(sc.contacts)
    n_uc = ctl.partition.n_uc
    dims_ok = (
        cmd.solution1.dim == (ctl.partition.n_cc + 12) + 6 * c
        and cmd.solution2.dim == n_uc
    )
    return (0.0 if dims_ok else 1.0), 0.5


def _suite_sim(rng, trials):
    from .model import generate_humanoid, sweep_params
    from .sim import SimConfig, step, total_energy

    model = generate_humanoid(sweep_params(20))
    s = standing_state(model)
    s.qd[:] = 0.1 * rng.standard_normal(model.nv)
    ws = Workspace(model, s)
    e0 = total_energy(ws)
    cfg = SimConfig(dt=1e-4, duration=0.1)
    tau = np.zeros(model.n)
    for _ in range(1000):
        s, _, _, ws = step(model, s, tau, [], cfg, ws=ws)
        ws = Workspace(model, s)
    return abs(total_energy(ws) - e0) / 0.1, 1e-3  # J/s over the 0.1 s window


VALIDATE_SUITES = {
    "spatial.transforms": _suite_spatial,
    "dynamics.mass-matrix": _suite_dynamics,
    "reduction.projector": _suite_reduction,
    "lqp.oracle": _suite_lqp,
    "controller.dims": _suite_controller,
    "sim.energy": _suite_sim,
}


@main.command("validate")
@click.option("--seed", default=0, show_default=True)
@click.option("--trials", default=200, show_default=True)
@click.option("--only", default=None, help="Substring filter on suite names.")
@click.option("--parallel", is_flag=True, help="Run suites in parallel (WBC_THREADS caps).")
def cmd_validate(seed, trials, only, parallel):
    """Run the invariant suites on random states; exit 1 on any failure."""
    names = [n for n in VALIDATE_SUITES if only is None or only in n]
    if not names:
        click.echo(f"error: no suite matches {only!r}", err=True)
        sys.exit(2)

    def run_one(name):
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        worst, tol = VALIDATE_SUITES[name](rng, trials)
        return name, worst, tol, time.perf_counter() - t0

    results = []
    if parallel:
        from concurrent.futures import ThreadPoolExecutor

        workers = int(os.environ.get("WBC_THREADS", os.cpu_count() or 1))
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            results = list(pool.map(run_one, names))
    else:
        results = [run_one(n) for n in names]

    failed = []
    for name, worst, tol, dt in results:
        ok = worst <= tol
        click.echo(
            f"{'PASS' if ok else 'FAIL'} {name}: worst residual {worst:.3e}"
            f" (tol {tol:.0e}, {dt:.1f} s)"
        )
        if not ok:
            failed.append((name, worst, tol))
    if failed:
        replay = {
            "seed": seed,
            "trials": trials,
            "failed": [{"suite": n, "worst": w, "tol": t} for n, w, t in failed],
        }
        path = "validate_failure.json"
        with open(path, "w") as fh:
            json.dump(replay, fh, indent=2)
        click.echo(f"wrote failing-case replay info to {path}", err=True)
        sys.exit(1)


# ---------------------------------------------------------------------------
# wbc gen-model


@main.command("gen-model")
@click.option("--preset", type=click.Choice(["tocabi33"]), default=None)
@click.option("--arm", default=None, type=int, help="Arm DOF per side (2..10).")
@click.option("--waist", default=0, type=int)
@click.option("--head", default=0, type=int)
@click.option("--extra", default=0, type=int, help="Extra torso joints.")
@click.option("--out", "out_path", required=True)
def cmd_gen_model(preset, arm, waist, head, extra, out_path):
    """Generate a humanoid model and write it as JSON."""
    if preset == "tocabi33":
        params = sweep_params(33)
    elif arm is not None:
        try:
            params = HumanoidParams(
                arm_dof=arm, waist_dof=waist, head_dof=head, extra_torso=extra
            )
        except Exception as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(2)
    else:
        click.echo("error: need --preset or --arm/--waist/--head/--extra", err=True)
        sys.exit(2)
    model = generate_humanoid(params)
    with open(out_path, "w") as fh:
        fh.write(model_to_json(model))
    click.echo(f"wrote {out_path} (n={model.n})")


# ---------------------------------------------------------------------------
# wbc plot-data


@main.command("plot-data")
@click.option("--bench", "bench_csv", required=True, help="bench.csv from `wbc bench`.")
@click.option("--out", "out_path", default="-", show_default=True)
def cmd_plot_data(bench_csv, out_path):
    """Emit gnuplot-ready (n, ratio) columns per support type."""
    import csv

    if not os.path.exists(bench_csv):
        click.echo(f"error: file not found: {bench_csv}", err=True)
        sys.exit(2)
    by_support = {}
    with open(bench_csv) as fh:
        for row in csv.DictReader(fh):
            if row["method"] != REDUCED:
                continue
            by_support.setdefault(row["support_type"], []).append(
                (int(row["n"]), float(row["ratio_vs_conventional"]))
            )
    lines = []
    for support, pts in by_support.items():
        lines.append(f"# support={support}  (n  ratio_conventional_over_reduced)")
        for n, r in sorted(pts):
            lines.append(f"{n} {r:.4f}")
        lines.append("")
        lines.append("")
    text = "\n".join(lines)
    if out_path == "-":
        click.echo(text)
    else:
        with open(out_path, "w") as fh:
            fh.write(text)
        click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
