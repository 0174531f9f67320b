"""Command-line entry points."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import KERNEL_BACKEND
from .appld import (
    fit_library,
    fit_segment_params,
    save_context_model,
    save_library,
    segment,
    train_context_classifier,
)
from .bclearn import (
    BcController,
    TrainConfig,
    extract_samples,
    load_bc_params,
    save_bc_params,
    train,
)
from .controllers import OpenLoopController, RuleBasedController
from .dataset import RecordingSession, load as load_demo, stats as demo_stats, validate
from .errors import CrawlsimError
from .harness import (
    BenchConfig,
    DEPTH_SIZE,
    TRIAL_TIMEOUT,
    run_benchmark,
    run_trial,
)
from .terrain import CourseSpec, Difficulty, generate_course, save_heightmap
from .vehicle import PRESETS

DIFFICULTIES = [d.value for d in Difficulty]


def _difficulty(name: str) -> Difficulty:
    return Difficulty(name)


@click.group()
@click.version_option(message=f"%(prog)s %(version)s (kernels: {KERNEL_BACKEND})")
def main():
    """Deterministic rock-crawling simulator and benchmark tools."""


@main.command("gen-course")
@click.option("--difficulty", type=click.Choice(DIFFICULTIES), default="Medium")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resolution", type=float, default=0.02, show_default=True)
@click.option("--length", type=float, default=3.1, show_default=True)
@click.option("--width", type=float, default=1.3, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="output PGM path")
def gen_course(difficulty, seed, resolution, length, width, out):
    """Generate a course heightmap and write it as 16-bit PGM + sidecar."""
    spec = CourseSpec(_difficulty(difficulty), seed, (length, width), resolution)
    m = generate_course(spec)
    save_heightmap(m, out)
    click.echo(
        f"wrote {out}: {m.heights.shape[1]}x{m.heights.shape[0]} cells, "
        f"max elevation {m.heights.max():.3f} m"
    )


@main.command("run-trial")
@click.option("--vehicle", type=click.Choice(sorted(PRESETS)), default="V6W")
@click.option("--controller", type=click.Choice(["OL", "RB", "BC"]), default="RB")
@click.option("--bc-params", type=click.Path(exists=True), default=None)
@click.option("--difficulty", type=click.Choice(DIFFICULTIES), default="Medium")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--direction", type=click.Choice(["forward", "reverse"]), default="forward")
@click.option("--timeout", type=float, default=TRIAL_TIMEOUT, show_default=True)
@click.option("--depth-size", type=int, default=DEPTH_SIZE, show_default=True)
def run_trial_cmd(vehicle, controller, bc_params, difficulty, seed, direction, timeout, depth_size):
    """Run a single trial and print the outcome."""
    ctl = _make_controller(controller, bc_params)
    spec = CourseSpec(_difficulty(difficulty), seed)
    result = run_trial(
        ctl,
        PRESETS[vehicle],
        spec,
        timeout=timeout,
        direction=1 if direction == "forward" else -1,
        depth_size=depth_size,
    )
    time_str = f" in {result.traversal_time:.2f} s" if result.traversal_time else ""
    click.echo(f"{result.controller_id} on {difficulty}/{seed}: {result.outcome.value}{time_str}")


def _make_controller(kind: str, bc_params_path):
    if kind == "OL":
        return OpenLoopController()
    if kind == "RB":
        return RuleBasedController()
    if bc_params_path is None:
        raise click.UsageError("--bc-params is required for the BC controller")
    return BcController(load_bc_params(bc_params_path))


@main.command("bench")
@click.option("--vehicle", "vehicles", type=click.Choice(sorted(PRESETS)), multiple=True, default=("V6W",), show_default=True)
@click.option("--seed", type=int, default=42, show_default=True, help="base seed")
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--depth-size", type=int, default=DEPTH_SIZE, show_default=True)
@click.option("--timeout", type=float, default=TRIAL_TIMEOUT, show_default=True)
@click.option("--difficulty", "difficulties", type=click.Choice(DIFFICULTIES), multiple=True, default=("Easy", "Medium", "Difficult"), show_default=True)
@click.option("--no-bc", is_flag=True, help="skip the learned controllers")
@click.option("--bc-epochs", type=int, default=15, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="write report files (.txt/.csv)")
def bench(vehicles, seed, trials, depth_size, timeout, difficulties, no_bc, bc_epochs, out):
    """Run the benchmark grid and emit the results table."""
    cfg = BenchConfig(
        vehicles=tuple(vehicles),
        difficulties=tuple(_difficulty(d) for d in difficulties),
        trials=trials,
        base_seed=seed,
        timeout=timeout,
        depth_size=depth_size,
        include_bc=not no_bc,
        bc_epochs=bc_epochs,
    )
    table = run_benchmark(cfg)
    text = table.to_text()
    click.echo(text, nl=False)
    if out:
        base = Path(out)
        base.with_suffix(".txt").write_text(text, encoding="utf-8")
        base.with_suffix(".csv").write_text(table.to_csv(), encoding="utf-8")
        click.echo(f"wrote {base.with_suffix('.txt')} and {base.with_suffix('.csv')}")


@main.command("record")
@click.option("--vehicle", type=click.Choice(sorted(PRESETS)), default="V6W")
@click.option("--controller", type=click.Choice(["OL", "RB"]), default="RB")
@click.option("--difficulty", type=click.Choice(DIFFICULTIES), default="Easy")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--direction", type=click.Choice(["forward", "reverse"]), default="forward")
@click.option("--timeout", type=float, default=TRIAL_TIMEOUT, show_default=True)
@click.option("--depth-size", type=int, default=DEPTH_SIZE, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="demonstration directory")
def record(vehicle, controller, difficulty, seed, direction, timeout, depth_size, out):
    """Record a scripted (headless) demonstration to a dataset directory."""
    ctl = _make_controller(controller, None)
    spec = CourseSpec(_difficulty(difficulty), seed)
    session = RecordingSession(
        out,
        vehicle=vehicle,
        course_seed=seed,
        course_difficulty=difficulty,
        trial_id=Path(out).name,
    )
    result = run_trial(
        ctl,
        PRESETS[vehicle],
        spec,
        timeout=timeout,
        direction=1 if direction == "forward" else -1,
        depth_size=depth_size,
        frame_hook=session.record_frame,
    )
    demo = session.close()
    click.echo(f"recorded {len(demo.frames)} frames to {out} ({result.outcome.value})")


@main.command("train-bc")
@click.option("--demo", "demos", type=click.Path(exists=True), multiple=True, required=True)
@click.option("--out", type=click.Path(), required=True, help="parameter file (VWBC1)")
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--learning-rate", type=float, default=1e-3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--h", "h_weights", type=float, nargs=2, default=(1.0, 1.0), show_default=True)
def train_bc(demos, out, epochs, batch_size, learning_rate, seed, h_weights):
    """Behavior-clone a policy from recorded demonstrations."""
    samples = extract_samples([load_demo(d) for d in demos])
    cfg = TrainConfig(
        h=tuple(h_weights),
        learning_rate=learning_rate,
        batch_size=batch_size,
        epochs=epochs,
        seed=seed,
    )
    params, curve = train(samples, cfg)
    save_bc_params(params, out)
    click.echo(
        f"trained on {len(samples)} frames for {epochs} epochs: "
        f"loss {curve[0]:.4f} -> {curve[-1]:.4f}; wrote {out}"
    )


@main.command("appld-fit")
@click.option("--demo", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True, help="output directory")
@click.option("--budget", type=int, default=2000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--min-seg-len", type=int, default=20, show_default=True)
@click.option("--penalty", type=float, default=4.0, show_default=True)
@click.option("--window", type=int, default=10, show_default=True, help="mode filter length")
def appld_fit(demo, out, budget, seed, min_seg_len, penalty, window):
    """Segment a demonstration, fit per-context parameters, train the
    context classifier, and write the parameter library."""
    from .appld import featurize

    demonstration = load_demo(demo)
    cp = segment(demonstration, min_seg_len=min_seg_len, penalty=penalty)
    click.echo(f"segments: {cp.k} (changepoints at {list(cp.taus)})")
    library, fits = fit_library(demonstration, cp, budget=budget, seed=seed)
    for k, fit in enumerate(fits, start=1):
        click.echo(
            f"  context {k}: replay loss {fit.loss:.3e} after {fit.evaluations} evaluations"
        )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_library(library, out_dir / "library.json")
    if cp.k > 1:
        feats = np.stack(
            [
                featurize(demonstration.depth(i), f.w, _gs(f))
                for i, f in enumerate(demonstration.frames)
            ]
        )
        model = train_context_classifier(
            feats, cp.labels(), p=window, min_class_count=min_seg_len
        )
        save_context_model(model, out_dir / "context_model.bin")
        click.echo(f"wrote {out_dir / 'library.json'} and {out_dir / 'context_model.bin'}")
    else:
        click.echo(f"wrote {out_dir / 'library.json'} (single context, no classifier)")


def _gs(frame):
    from .vehicle import GroundSpeed

    return GroundSpeed(frame.g[0], frame.g[1], frame.g[2], frame.g[3], frame.g[4])


@main.command("serve")
@click.option("--port", type=int, default=8008, show_default=True)
@click.option("--vehicle", type=click.Choice(sorted(PRESETS)), default="V6W")
@click.option("--difficulty", type=click.Choice(DIFFICULTIES), default="Medium")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--depth-size", type=int, default=DEPTH_SIZE, show_default=True)
@click.option("--record-root", type=click.Path(), default="recordings", show_default=True)
@click.option("--ui-dir", type=click.Path(exists=True), default=None, help="serve a browser UI from this directory")
def serve(port, vehicle, difficulty, seed, depth_size, record_root, ui_dir):
    """Run the interactive teleoperation service (TCP + WebSocket + static UI)."""
    from .service import SimService

    Path(record_root).mkdir(parents=True, exist_ok=True)
    service = SimService(
        CourseSpec(_difficulty(difficulty), seed),
        vehicle=vehicle,
        depth_size=depth_size,
        record_root=record_root,
        ui_dir=ui_dir,
    )
    click.echo(f"serving on port {port} (vehicle {vehicle}, {difficulty}/{seed}); Ctrl-C to stop")
    service.serve_forever(port)


@main.command("dataset-validate")
@click.argument("path", type=click.Path(exists=True))
def dataset_validate(path):
    """Validate a demonstration directory; non-zero exit on corruption."""
    try:
        demo = validate(path)
    except CrawlsimError as e:
        click.echo(f"INVALID ({type(e).__name__}): {e}", err=True)
        sys.exit(1)
    click.echo(f"ok: {len(demo.frames)} frames, vehicle {demo.manifest.vehicle}")


@main.command("dataset-stats")
@click.argument("path", type=click.Path(exists=True))
def dataset_stats(path):
    """Print summary statistics of a demonstration."""
    demo = load_demo(path)
    click.echo(demo_stats(demo).to_text(), nl=False)


if __name__ == "__main__":
    main()
