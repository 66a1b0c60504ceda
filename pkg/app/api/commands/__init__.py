import argparse
from typing import List

from pydantic import ValidationError

from app.api.schemas import ExperimentConfig
from app.core.exceptions import ConfigError

# argparse dest -> ExperimentConfig field
_FIELDS = {
    "model": "model_path",
    "out": "out_dir",
    "T": "T",
    "tau_min": "tau_min",
    "tau_max": "tau_max",
    "L": "L",
    "sector": "sector",
    "level": "level",
    "phase": "relative_phase",
    "reference_sector": "reference_sector",
    "reference_level": "reference_level",
    "omega_max": "omega_max",
    "oversample": "oversample",
    "window": "window",
    "refine": "refine",
    "shots": "shots",
    "seed": "seed",
    "threads": "threads",
    "method": "method",
    "steps_per_unit": "steps_per_unit",
    "runtimes": "runtimes",
    "sectors": "sectors",
    "pattern_ground": "pattern_ground",
    "pattern_reference": "pattern_reference",
    "stage_durations": "stage_durations",
}


def float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got '{text}'")


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, help="model description file (JSON)")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--T", type=float, help="ramp duration in units of 1/J")
    parser.add_argument("--tau-min", type=float)
    parser.add_argument("--tau-max", type=float)
    parser.add_argument("--L", type=int, help="number of tau grid points")
    parser.add_argument("--sector", type=float, help="conserved-quantity value q' of the ground branch")
    parser.add_argument("--level", type=int, help="driver level in sector q' (0 = ground)")
    parser.add_argument("--phase", type=float, help="relative phase injected on the reference branch")
    parser.add_argument("--reference-sector", type=float)
    parser.add_argument("--reference-level", type=int)
    parser.add_argument("--omega-max", type=float)
    parser.add_argument("--oversample", type=int)
    parser.add_argument("--window", choices=["none", "hann"])
    parser.add_argument("--refine", choices=["quadratic", "lsq"])
    parser.add_argument("--shots", type=int, help="projective shots per tau point (sampled mode)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int, help="worker threads for grid evaluation")
    parser.add_argument(
        "--method", choices=["magnus4", "midpoint", "rk4"],
        help="ramp integrator (default magnus4: 200 steps per unit reach 1e-8 step-halving agreement, "
             "the exponential midpoint rule only about 1e-6)",
    )
    parser.add_argument("--steps-per-unit", type=int)
    parser.add_argument("--no-cache-asp", dest="cache_asp", action="store_false", default=None,
                        help="re-simulate the ramps for every tau")
    parser.add_argument("--log-level", default=None)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    for dest, field in _FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[field] = value
    if getattr(args, "cache_asp", None) is not None:
        values["cache_asp"] = args.cache_asp
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigError(f"{location}: {first['msg']}")
