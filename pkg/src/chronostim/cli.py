"""Command-line front end.

Every subcommand resolves its options as defaults < ``--config`` sidecar <
explicit flags, calls the library, writes its outputs and echoes the
resolved options to a JSON sidecar. Re-running with ``--config SIDECAR``
reproduces the outputs byte for byte.

Exit codes: 0 success, 1 I/O error, 2 configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timedelta
from pathlib import Path

from . import __version__
from .diary import compare_epochs, parse_diary
from .errors import ConfigurationError, InputError
from .harness import (POLICY_PRESETS, EntrainmentModel, SeizureModelConfig, compare_policies,
                      resolve_policy, simulate_days)
from .scheduler import AdaptiveConfig, ClockSchedule, default_schedule, run_schedule, timeline_to_csv
from .streams import subseed
from .svg import rose_svg, tongue_svg
from .telemetry import (ACCEL_PROFILES, DEFAULT_ACCEL_RATE, DEFAULT_LFP_RATE, LFP_PRESETS, accel_from_csv,
                        accel_profile, dominant_peaks, lfp_from_csv, lfp_to_csv, synth_accel, synth_lfp, welch_psd)
from .tongues import (SweepAxis, fs_amplitude_grid, f0_equivalent_grid, grid_to_csv, select_stim_frequency, sweep,
                      tongue_regions)

DEFAULT_SEED = 0


class _Options:
    """Collects per-subcommand defaults while declaring argparse flags."""

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.defaults: dict = {}

    def add(self, flag: str, default, help: str, kind=None, **kw):
        key = flag.lstrip("-").replace("-", "_")
        self.defaults[key] = default
        if kind is None and default is not None and not isinstance(default, list):
            kind = type(default)
        self.parser.add_argument(flag, dest=key, default=None, type=kind, help=f"{help} (default: {default})", **kw)


def _common(opts: _Options, out: str):
    opts.add("--out", out, "primary output path", kind=str)
    opts.parser.add_argument("--config", default=None, help="re-run from a JSON sidecar written by a previous run")
    opts.parser.add_argument("--sidecar", default=None, help="sidecar path (default: OUT with .config.json suffix)")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, dict]]:
    parser = argparse.ArgumentParser(prog="chronostim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    defaults: dict[str, dict] = {}

    p = sub.add_parser("tongue", help="sweep an Arnold-tongue grid")
    o = _Options(p)
    o.add("--mode", "fs-vs-amplitude", "grid view", kind=str, choices=["fs-vs-amplitude", "f0-vs-equivalent"])
    o.add("--f0-hz", 13.0, "natural frequency (fs-vs-amplitude view)")
    o.add("--fs-hz", 13.0, "stimulation frequency (f0-vs-equivalent view)")
    o.add("--fs-min-hz", 6.0, "stimulation frequency axis start")
    o.add("--fs-max-hz", 30.0, "stimulation frequency axis end")
    o.add("--fs-steps", 241, "stimulation frequency axis points")
    o.add("--f0-min-hz", 1.0, "natural frequency axis start")
    o.add("--f0-max-hz", 26.0, "natural frequency axis end")
    o.add("--f0-steps", 251, "natural frequency axis points")
    o.add("--f-max-hz", None, "reference frequency for equivalent amplitude (default: f0 axis end)", kind=float)
    o.add("--i-min", 0.0, "amplitude axis start (coupling I, or equivalent amplitude)")
    o.add("--i-max", 1.0, "amplitude axis end")
    o.add("--i-steps", 101, "amplitude axis points")
    o.add("--pulses", 50, "pulses per trial")
    o.add("--trials", 20, "random initial phases per cell")
    o.add("--seed", DEFAULT_SEED, "random seed")
    o.add("--max-q", 6, "largest lock denominator reported")
    o.add("--workers", 1, "worker processes (does not change output)")
    o.add("--svg", None, "optional SVG heatmap path", kind=str)
    _common(o, "tongue.csv")
    defaults["tongue"] = o.defaults

    p = sub.add_parser("select", help="choose a stimulation frequency from a recorded or synthetic rhythm")
    o = _Options(p)
    o.add("--healthy-hz", 12.0, "healthy rhythm that should lock 1:1")
    o.add("--band-lo-hz", 2.0, "pathological band start")
    o.add("--band-hi-hz", 3.0, "pathological band end")
    o.add("--candidates-hz", "10,11,12,13,14,15,16", "comma-separated candidate frequencies", kind=str)
    o.add("--target-hz", None, "tuning target (default: strongest measured peak)", kind=float)
    o.add("--lfp", None, "LFP CSV (t,v); default is a synthetic restful trace", kind=str)
    o.add("--lfp-seconds", 60.0, "synthetic trace length")
    o.add("--peak-lo-hz", 4.0, "peak search band start")
    o.add("--peak-hi-hz", 40.0, "peak search band end")
    o.add("--eval-amplitude", 0.4, "equivalent amplitude at which candidates are judged")
    o.add("--narrowness-ratio", 0.1, "in-band lock width limit as a fraction of the 1:1 width")
    o.add("--max-q", 6, "largest lock denominator considered")
    o.add("--pulses", 50, "pulses per trial")
    o.add("--trials", 20, "random initial phases per cell")
    o.add("--seed", DEFAULT_SEED, "random seed")
    _common(o, "select.json")
    defaults["select"] = o.defaults

    p = sub.add_parser("psd", help="Welch spectrum and dominant peaks of an LFP trace")
    o = _Options(p)
    o.add("--lfp", None, "LFP CSV (t,v); default is a synthetic preset", kind=str)
    o.add("--preset", "restful", "synthetic state", kind=str, choices=sorted(LFP_PRESETS))
    o.add("--duration-s", 60.0, "synthetic trace length")
    o.add("--sample-rate-hz", float(DEFAULT_LFP_RATE), "synthetic sample rate")
    o.add("--segment", 512, "Welch segment length (samples)")
    o.add("--overlap", 0.5, "Welch segment overlap fraction")
    o.add("--band-lo-hz", 1.0, "peak search band start")
    o.add("--band-hi-hz", 40.0, "peak search band end")
    o.add("--prominence", 3.0, "peak height over local median")
    o.add("--seed", DEFAULT_SEED, "random seed")
    o.add("--peaks-out", None, "peak list JSON (default: OUT with .peaks.json suffix)", kind=str)
    o.add("--trace-out", None, "write the analysed trace as CSV", kind=str)
    _common(o, "psd.csv")
    defaults["psd"] = o.defaults

    p = sub.add_parser("simulate", help="run the stimulation scheduler over a day")
    o = _Options(p)
    o.add("--schedule", None, "clock schedule JSON (default: built-in day/night)", kind=str)
    o.add("--day-start", "07:00", "day segment start when no schedule file", kind=str)
    o.add("--night-start", "21:00", "night segment start when no schedule file", kind=str)
    o.add("--adaptive", None, "adaptive config JSON", kind=str)
    o.add("--inactivity-minutes", None, "override inactivity period", kind=float)
    o.add("--tap-threshold-g", None, "override tap threshold", kind=float)
    o.add("--accel", None, "accelerometer CSV (t,x,y,z); its first sample is taken to be at --start", kind=str)
    o.add("--profile", "all-active", "synthetic activity profile when no accel file", kind=str,
          choices=list(ACCEL_PROFILES))
    o.add("--tap-g", 7.5, "tap size in synthetic profiles")
    o.add("--accel-rate-hz", float(DEFAULT_ACCEL_RATE), "synthetic accelerometer rate")
    o.add("--start", "2021-01-01T00:00:00", "simulation start (ISO 8601)", kind=str)
    o.add("--duration-s", 86400.0, "simulated span")
    o.add("--fallback-at", None, "engage fallback at this time (ISO 8601)", kind=str)
    o.add("--seed", DEFAULT_SEED, "random seed for synthetic accelerometry")
    o.add("--timeline-out", None, "timeline CSV (default: OUT with .timeline.csv suffix)", kind=str)
    o.add("--rose", None, "timeline rose SVG (default: OUT with .rose.svg suffix)", kind=str)
    _common(o, "events.csv")
    defaults["simulate"] = o.defaults

    p = sub.add_parser("harness", help="compare two stimulation policies under the seizure model")
    o = _Options(p)
    o.add("--policy-a", "chronotherapy-no-tap", f"preset ({', '.join(POLICY_PRESETS)}) or policy JSON", kind=str)
    o.add("--policy-b", "neutral", "preset or policy JSON", kind=str)
    o.add("--reps", 200, "replicates per policy")
    o.add("--days", 30, "days per replicate")
    o.add("--base-rate-per-day", 0.15, "baseline seizure rate")
    o.add("--cluster-gain", 30.0, "self-excitation jump per seizure")
    o.add("--cluster-decay-per-h", 0.5, "self-excitation decay rate")
    o.add("--protective", 0.5, "rate multiplier under 1:1 healthy entrainment")
    o.add("--harmful", 2.0, "rate multiplier under in-band locking")
    o.add("--success-prob", 0.64, "probability a boost interrupts a seizure")
    o.add("--healthy-hz", 12.0, "healthy rhythm")
    o.add("--band-lo-hz", 2.0, "pathological band start")
    o.add("--band-hi-hz", 3.0, "pathological band end")
    o.add("--coupling-per-ma", 0.5, "circle-map coupling per mA")
    o.add("--seed", DEFAULT_SEED, "random seed")
    o.add("--workers", 1, "worker processes (does not change output)")
    o.add("--example-out", None, "also write replicate 0 of policy A as SimResult JSON", kind=str)
    o.add("--example-diary", None, "also write replicate 0 of policy A as a diary CSV", kind=str)
    _common(o, "harness.json")
    defaults["harness"] = o.defaults

    p = sub.add_parser("stats", help="seizure-diary period statistics and epoch comparison")
    o = _Options(p)
    o.add("--diary", [], "diary CSV (repeatable)", kind=str, action="append")
    o.add("--gap-hours", 24.0, "gap that separates occurrence periods")
    o.add("--split", None, "epoch split timestamp (ISO 8601)", kind=str)
    o.add("--alternative", "post-less", "one-tailed direction", kind=str, choices=["post-less", "post-greater"])
    _common(o, "stats.json")
    defaults["stats"] = o.defaults

    return parser, defaults


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    cfg = dict(defaults)
    if args.config:
        with open(args.config) as fh:
            side = json.load(fh)
        if side.get("command") != args.command:
            raise ConfigurationError(f"sidecar is for {side.get('command')!r}, not {args.command!r}")
        unknown = set(side.get("config", {})) - set(defaults)
        if unknown:
            raise ConfigurationError(f"unknown sidecar options: {sorted(unknown)}")
        cfg.update(side["config"])
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None and value != []:
            cfg[key] = value
    return cfg


def _suffixed(out: str, suffix: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + suffix))


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _date(text: str | None) -> datetime | None:
    if text is None:
        return None
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise ConfigurationError(f"bad timestamp {text!r}") from None


# -- subcommands --------------------------------------------------------------

def run_tongue(cfg: dict) -> dict:
    if cfg["mode"] == "fs-vs-amplitude":
        grid = fs_amplitude_grid(cfg["f0_hz"], SweepAxis(cfg["fs_min_hz"], cfg["fs_max_hz"], cfg["fs_steps"]),
                          SweepAxis(cfg["i_min"], cfg["i_max"], cfg["i_steps"]),
                          n_pulses=cfg["pulses"], n_trials=cfg["trials"], seed=cfg["seed"])
    else:
        grid = f0_equivalent_grid(cfg["fs_hz"], SweepAxis(cfg["f0_min_hz"], cfg["f0_max_hz"], cfg["f0_steps"]),
                          SweepAxis(cfg["i_min"], cfg["i_max"], cfg["i_steps"]), f_max=cfg["f_max_hz"],
                          n_pulses=cfg["pulses"], n_trials=cfg["trials"], seed=cfg["seed"])
    grid = sweep(grid, workers=cfg["workers"])
    _write(cfg["out"], grid_to_csv(grid))
    if cfg["svg"]:
        _write(cfg["svg"], tongue_svg(grid, cfg["max_q"]))
    regions = tongue_regions(grid, cfg["max_q"])
    for r in regions[:10]:
        print(f"{r.lock}\tarea={r.area} cells\trows={len(r.rows)}")
    return {"grid": grid.spec_dict()}


def _measured_peak(cfg: dict) -> float:
    if cfg["lfp"]:
        with open(cfg["lfp"]) as fh:
            ts = lfp_from_csv(fh.read())
    else:
        ts = synth_lfp(LFP_PRESETS["restful"], cfg["lfp_seconds"], seed=cfg["seed"])
    peaks = dominant_peaks(welch_psd(ts), (cfg["peak_lo_hz"], cfg["peak_hi_hz"]))
    if not peaks:
        raise InputError("no dominant peak in the search band")
    return peaks[0][0]


def run_select(cfg: dict) -> dict:
    target = cfg["target_hz"]
    measured = None
    if target is None:
        measured = target = _measured_peak(cfg)
    choice = select_stim_frequency(cfg["healthy_hz"], (cfg["band_lo_hz"], cfg["band_hi_hz"]),
                                   _floats(cfg["candidates_hz"]), cfg["eval_amplitude"], cfg["max_q"],
                                   cfg["narrowness_ratio"], tuning_target=target, n_pulses=cfg["pulses"],
                                   n_trials=cfg["trials"], seed=cfg["seed"])
    result = {"measured_peak_hz": measured, "tuning_target_hz": target, **choice.to_dict()}
    _write(cfg["out"], _dump(result))
    print(f"chosen: {choice.chosen_fs} Hz" if choice.found else "chosen: none")
    print(choice.rationale)
    return {}


def run_psd(cfg: dict) -> dict:
    if cfg["lfp"]:
        with open(cfg["lfp"]) as fh:
            ts = lfp_from_csv(fh.read())
    else:
        ts = synth_lfp(LFP_PRESETS[cfg["preset"]], cfg["duration_s"], cfg["sample_rate_hz"], seed=cfg["seed"])
    if cfg["trace_out"]:
        _write(cfg["trace_out"], lfp_to_csv(ts))
    ps = welch_psd(ts, cfg["segment"], cfg["overlap"])
    peaks = dominant_peaks(ps, (cfg["band_lo_hz"], cfg["band_hi_hz"]), cfg["prominence"])
    lines = ["freq_hz,power"] + [f"{f:.9g},{p:.9g}" for f, p in zip(ps.freqs, ps.power)]
    _write(cfg["out"], "\n".join(lines) + "\n")
    _write(cfg["peaks_out"] or _suffixed(cfg["out"], ".peaks.json"),
           _dump({"resolution_hz": ps.resolution, "peaks": [{"freq_hz": f, "power": p} for f, p in peaks]}))
    for f, p in peaks:
        print(f"peak {f:.3f} Hz\tpower {p:.4g}")
    return {}


def run_simulate(cfg: dict) -> dict:
    if cfg["schedule"]:
        with open(cfg["schedule"]) as fh:
            schedule = ClockSchedule.from_dict(json.load(fh))
    else:
        schedule = default_schedule(cfg["day_start"], cfg["night_start"])
    adaptive = AdaptiveConfig()
    if cfg["adaptive"]:
        with open(cfg["adaptive"]) as fh:
            adaptive = AdaptiveConfig.from_dict(json.load(fh))
    overrides = {k: cfg[c] for k, c in (("inactivity_minutes", "inactivity_minutes"),
                                        ("tap_threshold_g", "tap_threshold_g")) if cfg[c] is not None}
    if overrides:
        adaptive = AdaptiveConfig.from_dict({**adaptive.to_dict(), **overrides})
    start = _date(cfg["start"])
    duration = cfg["duration_s"]
    if cfg["accel"]:
        with open(cfg["accel"]) as fh:
            accel = accel_from_csv(fh.read())
        accel = type(accel)(accel.sample_rate, accel.samples, start)
    elif cfg["profile"] == "all-active":
        accel = None
    else:
        accel = synth_accel(accel_profile(cfg["profile"], duration, cfg["tap_g"]), cfg["accel_rate_hz"],
                            cfg["seed"], start, duration)
    run = run_schedule(accel, schedule, adaptive, start, duration, _date(cfg["fallback_at"]))
    _write(cfg["out"], run.log.to_csv())
    _write(cfg["timeline_out"] or _suffixed(cfg["out"], ".timeline.csv"), timeline_to_csv(run.timeline))
    _write(cfg["rose"] or _suffixed(cfg["out"], ".rose.svg"),
           rose_svg(run.timeline, start + timedelta(seconds=max(duration, 0.0))))
    print(f"{len(run.log.entries)} transitions; final mode {run.final_state.mode.value}")
    return {"schedule_resolved": schedule.to_dict(), "adaptive_resolved": adaptive.to_dict()}


def _policy_arg(text: str):
    if text in POLICY_PRESETS or not (text.endswith(".json") or Path(text).exists()):
        return resolve_policy(text)
    with open(text) as fh:
        return resolve_policy(json.load(fh))


def run_harness(cfg: dict) -> dict:
    model = SeizureModelConfig(
        base_rate=cfg["base_rate_per_day"], cluster_gain=cfg["cluster_gain"],
        cluster_decay=cfg["cluster_decay_per_h"], entrainment_protective=cfg["protective"],
        entrainment_harmful=cfg["harmful"], interruption_success_prob=cfg["success_prob"],
        healthy_f0=cfg["healthy_hz"], pathological_band=(cfg["band_lo_hz"], cfg["band_hi_hz"]),
        entrainment=EntrainmentModel(coupling_per_ma=cfg["coupling_per_ma"]), seed=cfg["seed"])
    a, b = _policy_arg(cfg["policy_a"]), _policy_arg(cfg["policy_b"])
    comp = compare_policies(a, b, cfg["reps"], cfg["seed"], cfg["days"], model, workers=cfg["workers"])
    _write(cfg["out"], comp.to_json())
    if cfg["example_out"] or cfg["example_diary"]:
        r = simulate_days(cfg["days"], a.model(model), a.schedule, a.adaptive, a.tap_policy, subseed(cfg["seed"], 0, 0))
        if cfg["example_out"]:
            _write(cfg["example_out"], r.to_json())
        if cfg["example_diary"]:
            _write(cfg["example_diary"], r.to_diary_csv())
    print(f"{a.name}: {comp.a.mean_seizures:.2f} +/- {comp.a.sd_seizures:.2f} seizures / {cfg['days']} d")
    print(f"{b.name}: {comp.b.mean_seizures:.2f} +/- {comp.b.sd_seizures:.2f} seizures / {cfg['days']} d")
    print(f"one-tailed Mann-Whitney p = {comp.test.p_one_tailed:.4g} ({comp.test.method})")
    return {"model_resolved": model.to_dict(), "policy_a_resolved": a.to_dict(), "policy_b_resolved": b.to_dict()}


def run_stats(cfg: dict) -> dict:
    if not cfg["diary"]:
        raise ConfigurationError("at least one --diary is required")
    events = []
    for path in cfg["diary"]:
        with open(path) as fh:
            events += parse_diary(fh.read())
    events.sort(key=lambda e: e.timestamp)
    alternative = "x_less" if cfg["alternative"] == "post-less" else "x_greater"
    report = compare_epochs(events, _date(cfg["split"]), cfg["gap_hours"], alternative)
    text = report.to_json()
    _write(cfg["out"], text)
    sys.stdout.write(text)
    return {}


COMMANDS = {"tongue": run_tongue, "select": run_select, "psd": run_psd, "simulate": run_simulate,
            "harness": run_harness, "stats": run_stats}


def main(argv: list[str] | None = None) -> int:
    parser, defaults = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args, defaults[args.command])
        extra = COMMANDS[args.command](cfg)
        sidecar = args.sidecar or _suffixed(cfg["out"], ".config.json")
        _write(sidecar, _dump({"command": args.command, "version": __version__, "config": cfg, **extra}))
    except (ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
