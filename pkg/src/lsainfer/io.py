"""JSON serialization of problems and inference reports.

Floats go through ``json`` which writes ``repr``-exact decimals, so a
problem round-trips bit for bit.
"""

import json

import numpy as np

from .errors import ValidationError
from .markov import ArOneProcess, FiniteChain
from .problems import LsaProblem, NonlinearProblem


def problem_to_dict(problem):
    if isinstance(problem, NonlinearProblem):
        proc = problem.covariate_process
        return {
            "family": problem.family,
            "dim": proc.dim,
            "autocorrelation": proc.autocorrelation,
            "noise_scale": proc.noise_scale,
            "theta_star": problem.theta_star.tolist(),
        }
    if not isinstance(problem, LsaProblem):
        raise ValidationError(f"cannot serialize {type(problem).__name__}; convert to an LSA problem first")
    return {
        "family": problem.family,
        "n_states": problem.n_states,
        "dim": problem.dim,
        "transition": problem.chain.transition.tolist(),
        "stationary": problem.chain.stationary.tolist(),
        "A": problem.a_maps.tolist(),
        "b": problem.b_maps.tolist(),
        "a_bar": problem.a_bar.tolist(),
        "b_bar": problem.b_bar.tolist(),
        "theta_star": problem.theta_star.tolist(),
        "a_noise_bound": problem.a_noise_bound,
        "b_noise_sd": problem.b_noise_sd,
        "b_noise_dirs": problem.b_noise_dirs.tolist(),
    }


def problem_from_dict(data):
    try:
        if data.get("family") == "logistic":
            proc = ArOneProcess(int(data["dim"]), float(data["autocorrelation"]),
                                float(data.get("noise_scale", 1.0)))
            return NonlinearProblem(proc, np.array(data["theta_star"], dtype=float))
        chain = FiniteChain(np.array(data["transition"], dtype=float),
                            np.array(data["stationary"], dtype=float) if "stationary" in data else None)
        problem = LsaProblem(
            chain,
            np.array(data["A"], dtype=float),
            np.array(data["b"], dtype=float),
            family=data.get("family", "random"),
            a_noise_bound=float(data.get("a_noise_bound", 0.0)),
            b_noise_sd=float(data.get("b_noise_sd", 0.0)),
            b_noise_dirs=data.get("b_noise_dirs"),
        )
    except KeyError as exc:
        raise ValidationError(f"problem file lacks field {exc.args[0]!r}") from None
    for key in ("n_states", "dim"):
        if key in data and int(data[key]) != getattr(problem, key):
            raise ValidationError(f"{key} field disagrees with the arrays")
    return problem


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc.msg})") from None


def save_problem(problem, path):
    dump_json(problem_to_dict(problem), path)


def load_problem(path):
    return problem_from_dict(load_json(path))


def save_report(report, path, extra=None):
    data = report.to_dict()
    if extra:
        data.update(extra)
    dump_json(data, path)
