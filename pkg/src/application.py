"""
THERGM Toolkit - Main Application Class

This module contains the command-line application: it parses arguments,
resolves the configuration (defaults, YAML file, ``--set`` overrides and
command flags), sets up logging and hands the command to the pipeline
controller. Failures are mapped to process exit codes.
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __description__, __version__
from .controllers.pipeline_controller import (CLUSTERING_MODELS, CORRUPTION_LEVELS, FIT_METHODS,
                                              PipelineController, cmd_replay)
from .models.errors import ThergmError
from .models.thergm_config import SCENARIO_PRESETS
from .utils.config_loader import ConfigLoader, parse_overrides
from .utils.logger import setup_logger

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config.yaml"

# command-line flag -> configuration key
FLAG_KEYS = {
    "seed": "Seed",
    "k": "Clusters",
    "n": "NodesPerCluster",
    "t": "TimeSteps",
    "preset": "Preset",
    "terms": "Terms",
    "dim": "Dimension",
    "burnin": "BurnIn",
    "samples": "Samples",
    "thin": "Thin",
    "smooth": "SpectralSmoothing",
    "tau": "SpectralTau",
    "mcmc_samples": "McmcSamples",
    "workers": "Workers",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thergm", description=__description__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="YAML configuration file (strictly validated)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key; repeatable")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--workers", type=int, help="worker processes for parallel stages")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    parser.add_argument("--log-file", action="store_true", help="also log to logs/thergm_<time>.log")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a THERGM dataset")
    p.add_argument("--k", type=int, help="number of clusters")
    p.add_argument("--n", type=int, help="nodes per cluster")
    p.add_argument("--t", type=int, help="index of the last time step")
    p.add_argument("--preset", choices=sorted(SCENARIO_PRESETS))
    p.add_argument("--spec", "--terms", dest="terms", help="comma-separated statistics, e.g. edges,triangles,stability")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("cluster", help="stage one: estimate dynamic cluster memberships")
    p.add_argument("--net", type=Path, required=True, help="edge list CSV")
    p.add_argument("--model", choices=CLUSTERING_MODELS, default="dlsm")
    p.add_argument("--k", type=int)
    p.add_argument("--dim", type=int, help="latent dimension (dlsm)")
    p.add_argument("--burnin", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--smooth", type=float, help="temporal smoothing weight (dsbm)")
    p.add_argument("--tau", type=float, help="spectral regularizer (dsbm)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("fit-tergm", help="stage two: fit per-cluster TERGMs")
    p.add_argument("--net", type=Path, required=True)
    p.add_argument("--members", type=Path, required=True, help="membership CSV")
    p.add_argument("--spec", "--terms", dest="terms", help="comma-separated statistics")
    p.add_argument("--pooled", action="store_true", help="one coefficient vector shared by all clusters")
    p.add_argument("--method", choices=FIT_METHODS, default="mcmc")
    p.add_argument("--mcmc-samples", type=int)
    p.add_argument("--diagnostics", type=Path, help="stage-one diagnostics.json to embed")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", help="mis-clustering, transition estimate, goodness of fit and AUC")
    p.add_argument("--net", type=Path, required=True)
    p.add_argument("--truth", type=Path)
    p.add_argument("--est", type=Path)
    p.add_argument("--bundle", type=Path, help="fit.json or dlsm_bundle.json")
    p.add_argument("--n-sims", type=int, default=100)
    p.add_argument("--within-only", action="store_true", help="AUC over within-cluster pairs only")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("predict", help="tie probabilities for the next time step")
    p.add_argument("--net", type=Path, required=True)
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--method", choices=("conditional", "simulate"), default="conditional")
    p.add_argument("--n-sims", type=int, default=100)
    p.add_argument("--membership", choices=("fixed", "expected"), default="fixed")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("scenario", help="replicated simulation study for one preset")
    p.add_argument("--preset", choices=sorted(SCENARIO_PRESETS), required=True)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--k", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--fit-method", choices=FIT_METHODS, default="mcmc")
    p.add_argument("--gof-sims", type=int, default=20)
    p.add_argument("--corruption", type=float, nargs="+", default=list(CORRUPTION_LEVELS))
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path)
    return parser


class ThergmApp:
    """
    Main application class that orchestrates a command-line run.

    The application owns argument parsing and configuration; all work is
    delegated to :class:`PipelineController`.
    """

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.parser = build_parser()
        self.config_loader = ConfigLoader()

    def resolve_config(self, args: argparse.Namespace) -> Dict[str, Any]:
        """Defaults, then the config file, then ``--set`` overrides, then command flags."""
        overrides = parse_overrides(args.overrides)
        for flag, key in FLAG_KEYS.items():
            value = getattr(args, flag, None)
            if value is not None:
                overrides[key] = value
        if args.config is not None:
            return self.config_loader.load(args.config, strict=True, overrides=overrides)
        path = DEFAULT_CONFIG_PATH if DEFAULT_CONFIG_PATH.exists() else None
        return self.config_loader.load(path, strict=False, overrides=overrides)

    def dispatch(self, args: argparse.Namespace) -> None:
        if args.command == "replay":
            cmd_replay(args.manifest, args.out, workers=args.workers)
            return
        controller = PipelineController(self.resolve_config(args), workers=args.workers)
        if args.command == "simulate":
            controller.cmd_simulate(args.out)
        elif args.command == "cluster":
            controller.cmd_cluster(args.net, args.out, model=args.model, K=args.k)
        elif args.command == "fit-tergm":
            controller.cmd_fit(args.net, args.members, args.out, spec=args.terms, pooled=args.pooled,
                               method=args.method, diagnostics_path=args.diagnostics)
        elif args.command == "evaluate":
            controller.cmd_evaluate(args.net, args.out, truth_path=args.truth, est_path=args.est,
                                    bundle_path=args.bundle, n_sims=args.n_sims, within_only=args.within_only)
        elif args.command == "predict":
            controller.cmd_predict(args.net, args.bundle, args.out, method=args.method,
                                   n_sims=args.n_sims, membership=args.membership)
        elif args.command == "scenario":
            controller.cmd_scenario(args.out, replicates=args.replicates, fit_method=args.fit_method,
                                    corruption=args.corruption, gof_sims=args.gof_sims)

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        """
        Run one command.

        Args:
            argv: Command-line arguments without the program name

        Returns:
            Process exit code: 0 on success, the error family's code otherwise
        """
        args = self.parser.parse_args(argv)
        setup_logger(level=logging.DEBUG if args.verbose else logging.INFO, log_to_file=args.log_file)
        self.logger.info(f"thergm {__version__}: {args.command}")
        try:
            self.dispatch(args)
        except ThergmError as exc:
            self.logger.error(f"{type(exc).__name__}: {exc}")
            return exc.exit_code
        except KeyboardInterrupt:
            self.logger.warning("Interrupted")
            return 130
        except Exception as exc:
            self.logger.error(f"Unexpected failure: {exc}", exc_info=True)
            return 1
        return 0


def main(argv: Optional[List[str]] = None) -> int:
    return ThergmApp().run(argv)
