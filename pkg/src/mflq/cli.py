"""Command-line front end.

Every verb reads a problem file, writes a JSON report to stdout and a short
summary to stderr.  Exit codes: 0 success or affirmative verdict, 2 negative
verdict, 3 undetermined, 1 operational error.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import __version__, jsonio, oracle
from .affine import solve_lre
from .moments import closed_loop_cost, simulate
from .problem import ProblemData, ProblemError, load_problem
from .riccati import RiccatiError, classify, solve_gre
from .strategy import (
    ClosedLoopStrategy,
    Unsolvable,
    default_schedule,
    detect_open_loop,
    finiteness_scan,
    synthesize_closed_loop,
)

EXIT_OK, EXIT_ERROR, EXIT_NO, EXIT_UNDETERMINED = 0, 1, 2, 3
VALUE_TOL = 1e-8


class _Summary:
    def __init__(self):
        self.lines: list[str] = []

    def __call__(self, line: str) -> None:
        self.lines.append(line)


def _digest(p: ProblemData) -> dict:
    return {"n": p.n, "m": p.m, "l": p.l, "N": p.N, "homogeneous": p.homogeneous,
            "info": p.info, "atoms": len(p.initial.probs), "noise": p.noise.kind}


def _riccati_table(p: ProblemData, sol) -> list[dict]:
    rows = []
    for t in range(p.T + 1):
        row = {"k": p.l + t, "P": sol.P[t], "Pi": sol.Pi[t]}
        if t < p.T:
            row.update(Upsilon=sol.Ups[t], Upsilon_bar=sol.Upsbar[t], H=sol.H[t], H_bar=sol.Hbar[t],
                       Theta=sol.Theta[t], Theta_bar=sol.Thetabar[t])
        rows.append(row)
    return rows


def _verdict_dict(v) -> dict:
    return {"kind": v.kind, "alpha": v.alpha,
            "failures": [{"k": f.k, "matrix": f.matrix, "condition": f.condition, "value": f.value}
                         for f in v.failures],
            "min_eig_Upsilon": v.min_eig_ups, "min_eig_Upsilon_bar": v.min_eig_upsbar,
            "range_residual_Upsilon": v.range_residual_ups,
            "range_residual_Upsilon_bar": v.range_residual_upsbar,
            "gain_norms": v.gain_norms}


def _strategy_dict(p: ProblemData, s: ClosedLoopStrategy) -> list[dict]:
    return [{"k": p.l + t, "Theta": s.Theta[t], "Theta_bar": s.Thetabar[t], "v": s.v[t]}
            for t in range(p.T)]


def _monte_carlo(p: ProblemData, s, args, say) -> dict:
    est = simulate(p, s, args.paths, seed=args.seed)
    exact = closed_loop_cost(p, s)
    say(f"monte carlo: {est.mean:.10g} +- {est.stderr:.3g} ({est.paths} paths); exact {exact:.10g}")
    return {"paths": est.paths, "seed": est.seed, "kind": est.kind, "estimate": est.mean,
            "stderr": est.stderr, "exact": exact}


def cmd_solve(p: ProblemData, args, say):
    sol = solve_gre(p)
    verdict = classify(sol)
    result = {"riccati": _riccati_table(p, sol), "regularity": _verdict_dict(verdict)}
    say(f"regularity: {verdict.kind} (alpha {verdict.alpha:.10g})")
    out = synthesize_closed_loop(p)
    if isinstance(out, Unsolvable):
        result["closed_loop"] = {"solvable": False, "reason": out.reason}
        say(f"not closed-loop solvable: {out.reason}")
        return result, EXIT_NO
    strat, value = out
    aff = solve_lre(p, sol)
    result["affine"] = {"eta": aff.eta, "zeta": aff.zeta, "v": aff.v, "range_ok": aff.range_ok}
    result["closed_loop"] = {"solvable": True, "strategy": _strategy_dict(p, strat)}
    result["value"] = {"value": value.value, "quadratic": value.quadratic,
                       "mean_quadratic": value.mean_quadratic, "linear": value.linear,
                       "constant": value.constant}
    say(f"value: {value.value:.17g}")
    if args.paths > 0:
        result["monte_carlo"] = _monte_carlo(p, strat, args, say)
    return result, EXIT_OK


def cmd_classify(p: ProblemData, args, say):
    sol = solve_gre(p)
    verdict = classify(sol)
    say(f"regularity: {verdict.kind} (alpha {verdict.alpha:.10g})")
    for f in verdict.failures[:10]:
        say(f"  k={f.k} {f.matrix}: {f.condition} fails ({f.value:.3g})")
    result = {"riccati": _riccati_table(p, sol), "regularity": _verdict_dict(verdict)}
    return result, EXIT_OK if verdict.regular else EXIT_NO


def _schedule(args) -> list[float]:
    if not args.eps0 > 0 or args.steps < 0:
        raise ValueError("--eps0 must be positive and --steps nonnegative")
    return default_schedule(args.eps0, args.steps)


_CODES = {"finite": EXIT_OK, "solvable": EXIT_OK, "infinite": EXIT_NO, "unsolvable": EXIT_NO,
          "undetermined": EXIT_UNDETERMINED}


def cmd_finiteness(p: ProblemData, args, say):
    rep = finiteness_scan(p, _schedule(args))
    say(f"finiteness: {rep.verdict} ({rep.reason})")
    if np.all(np.isfinite(rep.P_l[-1])):
        say(f"  at eps={rep.eps[-1]:.3g}: min eig P_l {rep.min_eig_P[-1]:.10g}, Pi_l {rep.min_eig_Pi[-1]:.10g}")
    result = {"verdict": rep.verdict, "reason": rep.reason,
              "trace": [{"eps": e, "min_eig_P": a, "min_eig_Pi": b, "P": P, "Pi": Pi, "margin_ok": ok}
                        for e, a, b, P, Pi, ok in zip(rep.eps, rep.min_eig_P, rep.min_eig_Pi,
                                                      rep.P_l, rep.Pi_l, rep.a1_ok)]}
    return result, _CODES[rep.verdict]


def cmd_open_loop(p: ProblemData, args, say):
    rep = detect_open_loop(p, _schedule(args))
    say(f"open-loop: {rep.verdict} ({rep.reason})")
    result = {"verdict": rep.verdict, "reason": rep.reason,
              "trace": [{"eps": e, "cost": c, "norm": nm, "gain_sum": g}
                        for e, c, nm, g in zip(rep.eps, rep.costs, rep.norms, rep.gain_sup)],
              "differences": rep.diffs,
              "gain_sup": max(rep.gain_sup) if rep.gain_sup else None}
    if rep.control is not None:
        result["stationarity_residual"] = rep.stationarity
        result["cost"] = rep.costs[-1]
        result["control"] = rep.control.to_table(p.l)
        say(f"  limit cost {rep.costs[-1]:.12g}, stationarity residual {rep.stationarity:.3g}")
    return result, _CODES[rep.verdict]


def _check_value(p, model, say):
    ex = oracle.solve_exact(p, model)
    out = synthesize_closed_loop(p)
    res = {"oracle_status": ex.status, "oracle_value": ex.value, "min_eig_M": ex.min_eig}
    if isinstance(out, Unsolvable):
        res["closed_loop"] = {"solvable": False, "reason": out.reason}
        say(f"oracle: {ex.status}, value {ex.value:.12g}; closed loop unsolvable, nothing to compare")
        return res, True
    value = out[1].value
    diff = abs(value - ex.value) if ex.has_minimizer else np.inf
    ok = bool(diff <= VALUE_TOL * max(1.0, abs(value)))
    res.update(riccati_value=value, difference=diff, agree=ok)
    say(f"value: riccati {value:.15g}, oracle {ex.value:.15g} ({'agree' if ok else 'DISAGREE'})")
    return res, ok


def _check_stationarity(p, model, say):
    ex = oracle.solve_exact(p, model)
    res = {"oracle_status": ex.status, "min_eig_M": ex.min_eig}
    ok = True
    if ex.has_minimizer:
        r = oracle.stationarity_residual(p, ex.control)
        res["oracle_minimizer_residual"] = r
        ok &= r <= oracle.RES_TOL
        say(f"stationarity at oracle minimizer: {r:.3g}")
    out = synthesize_closed_loop(p)
    if not isinstance(out, Unsolvable):
        r = oracle.stationarity_residual(p, out[0].tree_control(p))
        res["closed_loop_residual"] = r
        ok &= r <= oracle.RES_TOL
        say(f"stationarity of closed-loop control: {r:.3g}")
    if not ex.has_minimizer and isinstance(out, Unsolvable):
        say(f"no minimizer ({ex.status}) and no closed-loop strategy")
    res["ok"] = bool(ok)
    return res, bool(ok)


def _check_convexity(p, model, say, samples: int = 100):
    hom = oracle.homogeneous_zero_start(p)
    hmodel = oracle.assemble_quadratic(hom) if not p.homogeneous or np.any(p.initial.values) else model
    lam = hmodel.min_eig
    rng = np.random.default_rng(0)
    worst = np.inf
    for _ in range(samples):
        u = oracle.random_control(hom, rng)
        worst = min(worst, oracle.exact_cost(hom, u) / max(u.inner(u), 1e-300))
    convex = lam >= -oracle.EIG_TOL
    consistent = convex == (worst >= -oracle.EIG_TOL) or (not convex and worst >= lam - 1e-9)
    verdict = classify(solve_gre(p))
    say(f"convexity: min eig of M = {lam:.10g} ({'convex' if convex else 'not convex'}); "
        f"riccati regularity {verdict.kind}")
    res = {"min_eig_M": lam, "convex": bool(convex), "uniformly_convex": bool(lam > oracle.EIG_TOL),
           "sampled_min_ratio": worst, "sampling_consistent": bool(consistent),
           "regularity": verdict.kind}
    return res, bool(convex and consistent)


def _check_identity(p, model, say, samples: int = 100):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(samples):
        u = oracle.random_control(p, rng)
        exact = oracle.exact_cost(p, u)
        worst = max(worst, abs(model.evaluate(u) - exact) / max(1.0, abs(exact)))
    ok = worst <= 1e-9
    say(f"quadratic identity: worst relative error {worst:.3g} over {samples} controls")
    return {"samples": samples, "worst_relative_error": worst, "ok": bool(ok)}, bool(ok)


_CHECKS = {"value": _check_value, "stationarity": _check_stationarity,
           "convexity": _check_convexity, "identity": _check_identity}


def cmd_oracle(p: ProblemData, args, say):
    model = oracle.assemble_quadratic(p)
    res, ok = _CHECKS[args.check](p, model, say)
    res = {"check": args.check, "stacked_dimension": model.size, **res}
    return res, EXIT_OK if ok else EXIT_NO


def cmd_simulate(p: ProblemData, args, say):
    if args.paths < 1:
        raise ValueError("simulate needs --paths >= 1")
    out = synthesize_closed_loop(p)
    if isinstance(out, Unsolvable):
        say(f"not closed-loop solvable: {out.reason}")
        return {"closed_loop": {"solvable": False, "reason": out.reason}}, EXIT_NO
    strat = out[0]
    mc = _monte_carlo(p, strat, args, say)
    z = abs(mc["estimate"] - mc["exact"]) / mc["stderr"] if mc["stderr"] > 0 else 0.0
    mc["z_score"] = z
    return {"strategy": _strategy_dict(p, strat), "monte_carlo": mc}, EXIT_OK


COMMANDS = {"solve": cmd_solve, "classify": cmd_classify, "finiteness": cmd_finiteness,
            "open-loop": cmd_open_loop, "oracle": cmd_oracle, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mflq", description="Mean-field stochastic LQ solver.")
    ap.add_argument("--version", action="version", version=f"mflq {__version__}")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in COMMANDS:
        sp = sub.add_parser(verb)
        sp.add_argument("problem", help="problem file (JSON)")
        sp.add_argument("--eps0", type=float, default=1.0, help="first regularization parameter")
        sp.add_argument("--steps", type=int, default=40, help="number of halvings of eps")
        sp.add_argument("--paths", type=int, default=0, help="Monte Carlo paths (0 = none)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--info", choices=("predictable", "adapted"), default=None,
                        help="override the information pattern of the file")
        if verb == "oracle":
            sp.add_argument("--check", choices=tuple(_CHECKS), required=True)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    say = _Summary()
    report = {"tool": "mflq", "version": __version__,
              "command": {"verb": args.verb, "argv": argv}}
    start = time.perf_counter()
    try:
        p = load_problem(args.problem)
        if args.info:
            p = p.with_info(args.info)
        report["problem"] = _digest(p)
        result, code = COMMANDS[args.verb](p, args, say)
        report["result"] = result
    except FileNotFoundError as exc:
        code, report["error"] = EXIT_ERROR, {"kind": "io", "message": str(exc)}
    except oracle.OracleGuardError as exc:
        code, report["error"] = EXIT_ERROR, {"kind": "guard", "message": str(exc)}
    except ProblemError as exc:
        code, report["error"] = EXIT_ERROR, {"kind": "invalid problem", "message": str(exc)}
    except (RiccatiError, ValueError, OSError) as exc:
        code, report["error"] = EXIT_ERROR, {"kind": type(exc).__name__, "message": str(exc)}
    report["exit_code"] = code
    sys.stdout.write(jsonio.dumps(report) + "\n")
    if "error" in report:
        say(f"error: {report['error']['message']}")
    say(f"exit {code} ({time.perf_counter() - start:.3f}s)")
    sys.stderr.write("\n".join(say.lines) + "\n")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
