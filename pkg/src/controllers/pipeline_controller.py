"""
Pipeline Controller

This module contains the controller behind every command: it turns the
resolved configuration into model settings, runs the business logic,
writes the output files and records a run manifest next to them.
"""

import logging
import os
import time
from dataclasses import replace
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from .. import __version__
from ..business.bundles import ModelBundle, fit_thergm_bundle, load_bundle
from ..business.clustering_interface import ClusteringModel
from ..business.dlsm import DynamicLatentSpaceModel, McmcSettings
from ..business.dsbm import DynamicSBMBaseline, SpectralSettings
from ..business.evaluation import (align_labels, auc, corrupt_labels, estimate_transition, gof,
                                   misclustering, predict_proba, within_mask)
from ..business.generator import simulate
from ..business.statistics import StatisticSpec
from ..business.tergm_fit import McmcMleSettings
from ..models.errors import ConfigError, DataError
from ..models.network import DynamicNetwork, MembershipSeries
from ..models.results import EvalReport, RunManifest
from ..models.thergm_config import ThergmConfig, TransitionMatrix, get_preset
from ..utils.config_loader import ConfigLoader
from ..utils.data_io import (read_json, read_memberships, read_network, validate_files, write_edges, write_json,
                             write_memberships, write_predictions, write_table)
from ..utils.seeding import derive_rng, derive_seed
from ..visualization.report_tables import ReportTables, summarize

CLUSTERING_MODELS = ("dlsm", "dsbm")
FIT_METHODS = ("mcmc", "mple")
CORRUPTION_LEVELS = (0.0, 0.1, 0.2, 0.3)
ESTIMATE_CORRUPTION = 0.2
MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.yaml"


def build_thergm_config(config: Dict[str, Any]) -> ThergmConfig:
    """ThergmConfig from the flat configuration keys; a Preset sets B, densities and Theta."""
    K = int(config["Clusters"])
    spec = StatisticSpec.parse(config["Terms"])
    nodes = config["NodesPerCluster"]
    n_per_cluster = tuple(int(v) for v in nodes) if isinstance(nodes, list) else (int(nodes),) * K
    params: Dict[str, Any] = dict(m_attach=int(config["AttachEdges"]),
                                  gibbs_sweeps=int(config["GibbsSweeps"]))
    if config.get("Theta") is not None:
        params["theta"] = np.asarray(config["Theta"], dtype=np.float64)
    if config.get("TransitionMatrix") is not None:
        params["B"] = TransitionMatrix(np.asarray(config["TransitionMatrix"], dtype=np.float64))

    if config.get("Preset"):
        cfg = get_preset(config["Preset"]).build_config(
            K=K, n_per_cluster=n_per_cluster[0], T=int(config["TimeSteps"]),
            seed=int(config["Seed"]), spec=spec, **params)
        return replace(cfg, n_per_cluster=n_per_cluster) if len(set(n_per_cluster)) > 1 else cfg
    params.setdefault("B", TransitionMatrix.sticky(K, float(config["StayProbability"])))
    return ThergmConfig(K=K, n_per_cluster=n_per_cluster, T=int(config["TimeSteps"]), spec=spec,
                        p_between=float(config["PBetween"]), p_within_init=float(config["PWithinInit"]),
                        seed=int(config["Seed"]), **params)


class PipelineController:
    """
    Runs the commands of the toolkit.

    Every ``cmd_*`` method writes its outputs into ``out_dir`` together with
    a ``manifest.json`` sufficient to re-run it through ``cmd_replay``.
    """

    def __init__(self, config: Dict[str, Any], workers: Optional[int] = None):
        """
        Initialize the controller.

        Args:
            config: Fully resolved flat configuration (defaults, file, overrides)
            workers: Worker processes for parallel stages (default: Workers key, else CPU count)
        """
        self.config = dict(config)
        self.workers = int(workers or self.config.get("Workers") or os.cpu_count() or 1)
        self.seed = int(self.config["Seed"])
        self.tables = ReportTables()
        self.logger = logging.getLogger(__name__)

    # Settings
    def mcmc_mle_settings(self, seed: Optional[int] = None) -> McmcMleSettings:
        seed = self.seed if seed is None else seed
        return McmcMleSettings(samples=int(self.config["McmcSamples"]), burn_in=int(self.config["McmcBurnIn"]),
                               max_iter=int(self.config["McmcMaxIter"]),
                               final_samples=int(self.config["McmcFinalSamples"]),
                               max_samples=int(self.config["McmcMaxSamples"]),
                               target_mcse=float(self.config["McmcTargetMcse"]), seed=derive_seed(seed, "tergm-fit"))

    def dlsm_settings(self, seed: Optional[int] = None) -> McmcSettings:
        seed = self.seed if seed is None else seed
        return McmcSettings(burn_in=int(self.config["BurnIn"]), samples=int(self.config["Samples"]),
                            thin=int(self.config["Thin"]), proposal_step=float(self.config["ProposalStep"]),
                            rho=float(self.config["Rho"]), seed=derive_seed(seed, "dlsm"))

    def spectral_settings(self, K: int, seed: Optional[int] = None) -> SpectralSettings:
        seed = self.seed if seed is None else seed
        tau = self.config.get("SpectralTau")
        return SpectralSettings(K=K, tau=None if tau is None else float(tau),
                                smoothing=float(self.config["SpectralSmoothing"]), seed=derive_seed(seed, "dsbm"))

    def make_clusterer(self, model: str, K: int, seed: Optional[int] = None) -> ClusteringModel:
        if model == "dlsm":
            return DynamicLatentSpaceModel(K, int(self.config["Dimension"]), self.dlsm_settings(seed))
        if model == "dsbm":
            return DynamicSBMBaseline(self.spectral_settings(K, seed))
        raise ConfigError(f"unknown clustering model '{model}'; choose from {CLUSTERING_MODELS}")

    def _finish(self, command: str, arguments: Dict[str, Any], out_dir: Path, artifacts: Dict[str, Path],
                started: float, extra: Optional[Dict[str, Any]] = None) -> RunManifest:
        artifacts = {**artifacts, "config": Path(out_dir) / CONFIG_NAME}
        ConfigLoader(self.logger).save(artifacts["config"], self.config)
        manifest = RunManifest(command=command,
                               arguments={k: (str(v) if isinstance(v, Path) else v) for k, v in arguments.items()},
                               config=self.config, seed=self.seed,
                               artifacts={name: str(path) for name, path in artifacts.items()},
                               wall_clock_seconds=round(time.perf_counter() - started, 3),
                               version=__version__, extra=extra or {})
        write_json(manifest.to_dict(), Path(out_dir) / MANIFEST_NAME)
        self.logger.info(f"{command} finished in {manifest.wall_clock_seconds:.1f}s; outputs in {out_dir}")
        return manifest

    def _load_dataset(self, net_path: Path, members_path: Optional[Path] = None):
        """Read a dataset through validate_files: warnings are logged, errors raise DataError."""
        results = validate_files(net_path, members_path)
        for warning in results.warnings:
            self.logger.warning(f"{net_path}: {warning}")
        results.raise_if_invalid()
        return results.net, results.memberships

    # Commands
    def cmd_simulate(self, out_dir: Path) -> RunManifest:
        """Simulate a THERGM dataset: edges.csv, truth.csv."""
        started = time.perf_counter()
        out_dir = Path(out_dir)
        cfg = build_thergm_config(self.config)
        sim = simulate(cfg)
        artifacts = {
            "edges": write_edges(sim.net, out_dir / "edges.csv"),
            "truth": write_memberships(sim.truth, sim.net.node_ids, out_dir / "truth.csv"),
        }
        return self._finish("simulate", {"out_dir": out_dir}, out_dir, artifacts, started,
                            extra={"thergm_config": sim.config, "trace": sim.trace})

    def cmd_cluster(self, net_path: Path, out_dir: Path, model: str = "dlsm",
                    K: Optional[int] = None) -> RunManifest:
        """Stage one: estimate memberships (members.csv) with diagnostics."""
        started = time.perf_counter()
        out_dir = Path(out_dir)
        K = int(K or self.config["Clusters"])
        net, _ = self._load_dataset(net_path)
        clusterer = self.make_clusterer(model, K)
        result = clusterer.fit(net)
        artifacts = {
            "members": write_memberships(result.memberships, net.node_ids, out_dir / "members.csv"),
            "diagnostics": write_json({"model": model, "K": K, "warnings": result.warnings,
                                       **result.diagnostics}, out_dir / "diagnostics.json"),
        }
        if isinstance(clusterer, DynamicLatentSpaceModel) and clusterer.bundle_ is not None:
            artifacts["bundle"] = write_json(clusterer.bundle_.to_dict(), out_dir / "dlsm_bundle.json")
        return self._finish("cluster", {"net_path": net_path, "out_dir": out_dir, "model": model, "K": K},
                            out_dir, artifacts, started)

    def cmd_fit(self, net_path: Path, members_path: Path, out_dir: Path, spec: Optional[str] = None,
                pooled: bool = False, method: str = "mcmc",
                diagnostics_path: Optional[Path] = None) -> RunManifest:
        """Stage two: per-cluster TERGM fits bundled with B-hat and p-hat (fit.json)."""
        started = time.perf_counter()
        out_dir = Path(out_dir)
        if method not in FIT_METHODS:
            raise ConfigError(f"unknown fit method '{method}'; choose from {FIT_METHODS}")
        spec = StatisticSpec.parse(spec or self.config["Terms"])
        net, m = self._load_dataset(net_path, members_path)
        stage_one = {"members_path": str(members_path)}
        if diagnostics_path is not None:
            stage_one["diagnostics"] = read_json(diagnostics_path)
        bundle = fit_thergm_bundle(net, m, spec, self.mcmc_mle_settings(), method=method, pooled=pooled,
                                   workers=self.workers, m_attach=int(self.config["AttachEdges"]),
                                   sweeps=int(self.config["GibbsSweeps"]), stage_one=stage_one)
        artifacts = {"fit": write_json(bundle.to_dict(), out_dir / "fit.json")}
        estimates = self.tables.estimates_table(bundle.fits, source="fit")
        artifacts["estimates"] = write_table(estimates, out_dir / "estimates.csv")
        arguments = {"net_path": net_path, "members_path": members_path, "out_dir": out_dir,
                     "spec": str(spec), "pooled": pooled, "method": method,
                     "diagnostics_path": diagnostics_path}
        return self._finish("fit-tergm", arguments, out_dir, artifacts, started)

    def _load_bundle(self, bundle_path: Path, net: DynamicNetwork) -> ModelBundle:
        bundle = load_bundle(read_json(bundle_path))
        if bundle.memberships.n != net.n:
            raise DataError(f"bundle has {bundle.memberships.n} nodes, network has {net.n}")
        return bundle

    def cmd_evaluate(self, net_path: Path, out_dir: Path, truth_path: Optional[Path] = None,
                     est_path: Optional[Path] = None, bundle_path: Optional[Path] = None,
                     n_sims: int = 100, within_only: bool = False) -> RunManifest:
        """Mis-clustering, transition estimate, goodness of fit and AUC (report.json + tidy CSVs)."""
        started = time.perf_counter()
        out_dir = Path(out_dir)
        net, _ = read_network(net_path)
        truth = read_memberships(truth_path, net) if truth_path else None
        est = read_memberships(est_path, net) if est_path else None
        report = EvalReport()
        artifacts: Dict[str, Path] = {}

        if truth is not None and est is not None:
            report.misclustering = misclustering(est, truth)
            artifacts["misclustering"] = write_table(
                self.tables.misclustering_table(report.misclustering, method="estimate"),
                out_dir / "misclustering.csv")

        flows = est if est is not None else truth
        if flows is not None and flows.T >= 1:
            B_hat = estimate_transition(flows, report.transition_warnings)
            report.transition_matrix = B_hat.B
            artifacts["transition"] = write_table(self.tables.transition_table(B_hat.B), out_dir / "transition.csv")
            artifacts["river"] = write_table(self.tables.river_table(flows), out_dir / "river.csv")

        if bundle_path is not None:
            bundle = self._load_bundle(bundle_path, net)
            report.gof = gof(net, bundle, n_sims=n_sims, seed=derive_seed(self.seed, "gof"),
                             workers=self.workers)
            artifacts["gof"] = write_table(self.tables.gof_table(report.gof, model=bundle.kind), out_dir / "gof.csv")
            net.require_temporal()
            scores = predict_proba(bundle, net.slice(net.T - 1), t=net.T - 1)
            mask = within_mask(bundle.labels_for(net.T - 1)) if within_only else None
            report.auc = auc(scores, net.slice(net.T), mask)
            self.logger.info(f"One-step AUC for slice {net.T}: {report.auc:.4f}")

        artifacts["report"] = write_json(report.to_dict(), out_dir / "report.json")
        arguments = {"net_path": net_path, "out_dir": out_dir, "truth_path": truth_path, "est_path": est_path,
                     "bundle_path": bundle_path, "n_sims": n_sims, "within_only": within_only}
        return self._finish("evaluate", arguments, out_dir, artifacts, started)

    def cmd_predict(self, net_path: Path, bundle_path: Path, out_dir: Path, method: str = "conditional",
                    n_sims: int = 100, membership: str = "fixed") -> RunManifest:
        """Tie probabilities for the slice after the last observed one (predictions.csv)."""
        started = time.perf_counter()
        out_dir = Path(out_dir)
        net, _ = read_network(net_path)
        bundle = self._load_bundle(bundle_path, net)
        if bundle.memberships.T != net.T:
            raise DataError(f"bundle was fitted on {bundle.memberships.T + 1} slices, network has {len(net)}")
        proba = predict_proba(bundle, net.slice(net.T), method=method, n_sims=n_sims,
                              seed=derive_seed(self.seed, "predict"), membership=membership)
        artifacts = {"predictions": write_predictions(proba, net.node_ids, out_dir / "predictions.csv")}
        arguments = {"net_path": net_path, "bundle_path": bundle_path, "out_dir": out_dir, "method": method,
                     "n_sims": n_sims, "membership": membership}
        return self._finish("predict", arguments, out_dir, artifacts, started)

    def cmd_scenario(self, out_dir: Path, replicates: int = 20, fit_method: str = "mcmc",
                     corruption: Sequence[float] = CORRUPTION_LEVELS, gof_sims: int = 20) -> RunManifest:
        """Batch of simulate-cluster-fit-evaluate replicates for one preset."""
        started = time.perf_counter()
        out_dir = Path(out_dir)
        if not self.config.get("Preset"):
            raise ConfigError("scenario needs a Preset (one of slow-easy, slow-hard, quick-easy, quick-hard)")
        if replicates < 1:
            raise ConfigError("scenario needs at least one replicate")
        jobs = [(self.config, r, tuple(corruption), fit_method, gof_sims) for r in range(replicates)]
        self.logger.info(f"Scenario {self.config['Preset']}: {replicates} replicates on {self.workers} workers")
        if self.workers > 1 and replicates > 1:
            with Pool(processes=min(self.workers, replicates)) as pool:
                outputs = list(tqdm(pool.imap(_scenario_replicate, jobs), total=replicates, desc="replicates"))
        else:
            outputs = [_scenario_replicate(job) for job in tqdm(jobs, desc="replicates")]

        frames = {name: pd.concat([o[name] for o in outputs], ignore_index=True)
                  for name in ("misclustering", "estimates", "auc", "gof")}
        artifacts = {name: write_table(df, out_dir / f"{name}.csv") for name, df in frames.items()}
        summary = {
            "misclustering": summarize(frames["misclustering"], ["method"], "rate").to_dict(orient="records"),
            "auc": summarize(frames["auc"], ["corruption"], "auc").to_dict(orient="records"),
            "gof": summarize(frames["gof"], ["model", "statistic"], "discrepancy").to_dict(orient="records"),
        }
        artifacts["summary"] = write_json(summary, out_dir / "summary.json")
        arguments = {"out_dir": out_dir, "replicates": replicates, "fit_method": fit_method,
                     "corruption": list(corruption), "gof_sims": gof_sims}
        return self._finish("scenario", arguments, out_dir, artifacts, started)

    COMMANDS = {
        "simulate": "cmd_simulate",
        "cluster": "cmd_cluster",
        "fit-tergm": "cmd_fit",
        "evaluate": "cmd_evaluate",
        "predict": "cmd_predict",
        "scenario": "cmd_scenario",
    }

    def run_command(self, command: str, arguments: Dict[str, Any]) -> RunManifest:
        if command not in self.COMMANDS:
            raise DataError(f"manifest names unknown command '{command}'")
        return getattr(self, self.COMMANDS[command])(**arguments)


def cmd_replay(manifest_path: Path, out_dir: Optional[Path] = None,
               workers: Optional[int] = None) -> RunManifest:
    """Re-execute the command recorded in a manifest with its recorded configuration."""
    manifest = RunManifest.from_dict(read_json(manifest_path))
    arguments = dict(manifest.arguments)
    if out_dir is not None:
        arguments["out_dir"] = str(out_dir)
    for key, value in list(arguments.items()):
        if key.endswith("_path") or key == "out_dir":
            arguments[key] = None if value is None else Path(value)
    logging.getLogger(__name__).info(f"Replaying '{manifest.command}' from {manifest_path}")
    return PipelineController(manifest.config, workers).run_command(manifest.command, arguments)


def _scenario_replicate(job) -> Dict[str, pd.DataFrame]:
    """One replicate of a scenario batch; runs in a worker process."""
    config, r, corruption, fit_method, gof_sims = job
    seed = derive_seed(int(config["Seed"]), "replicate", r)
    controller = PipelineController({**config, "Seed": seed}, workers=1)
    tables = controller.tables
    cfg = build_thergm_config(controller.config)
    sim = simulate(cfg)
    net, truth = sim.net, sim.truth
    settings = controller.mcmc_mle_settings()

    misclustering_rows: List[pd.DataFrame] = []
    dlsm_model = None
    estimated: Dict[str, MembershipSeries] = {}
    for model in CLUSTERING_MODELS:
        clusterer = controller.make_clusterer(model, cfg.K)
        m_hat = clusterer.fit_predict(net)
        # one global relabelling so cluster k of the estimate is comparable to true cluster k
        estimated[model] = m_hat.relabel(align_labels(m_hat.labels, truth.labels, cfg.K))
        misclustering_rows.append(tables.misclustering_table(misclustering(m_hat, truth), model, r))
        if model == "dlsm":
            dlsm_model = clusterer

    sources = {
        "truth": truth,
        "dlsm": estimated["dlsm"],
        f"corrupted-{ESTIMATE_CORRUPTION:g}": corrupt_labels(truth, ESTIMATE_CORRUPTION, derive_rng(seed, "corrupt-fit")),
    }
    estimate_rows, bundles = [], {}
    for source, m in sources.items():
        bundle = fit_thergm_bundle(net, m, cfg.spec, settings, method=fit_method,
                                   m_attach=cfg.m_attach, sweeps=cfg.gibbs_sweeps)
        bundles[source] = bundle
        estimate_rows.append(tables.estimates_table(bundle.fits, cfg.theta, source, r))

    auc_rows = []
    train = DynamicNetwork.from_slices(net.slices[:-1], net.node_ids)
    for level_idx, level in enumerate(corruption):
        m_c = corrupt_labels(truth, level, derive_rng(seed, "corrupt-auc", level_idx))
        m_train = MembershipSeries(m_c.labels[:, :-1], m_c.K)
        bundle = fit_thergm_bundle(train, m_train, cfg.spec, settings, method=fit_method,
                                   m_attach=cfg.m_attach, sweeps=cfg.gibbs_sweeps)
        score = auc(bundle.predict_proba(net.slice(net.T - 1)), net.slice(net.T))
        auc_rows.append({"corruption": level, "replicate": r, "auc": score})

    gof_rows = []
    for name, bundle in (("thergm", bundles["truth"]), ("dlsm", dlsm_model.bundle_)):
        report = gof(net, bundle, n_sims=gof_sims, seed=derive_seed(seed, "gof"))
        for statistic, entry in report.items():
            gof_rows.append({"model": name, "replicate": r, "statistic": statistic,
                             "discrepancy": entry["discrepancy"], "coverage": entry["coverage"]})

    return {
        "misclustering": pd.concat(misclustering_rows, ignore_index=True),
        "estimates": pd.concat(estimate_rows, ignore_index=True),
        "auc": pd.DataFrame(auc_rows),
        "gof": pd.DataFrame(gof_rows),
    }


__all__ = ["PipelineController", "build_thergm_config", "cmd_replay"]
