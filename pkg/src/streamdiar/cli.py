"""Command line client. Talks to a running service, or to an in-process app when none is given."""

from __future__ import annotations

import json
import sys
import warnings
from pathlib import Path

import click
import httpx
import numpy as np

from .containers import FEATURES_MAGIC, iter_matrix_chunks, read_matrix_header
from .pipeline import PipelineConfig, load_config
from .rttm import format_rttm_line, parse_rttm
from .timebase import Segment
from .tuning import parse_grid


class ServiceError(click.ClickException):
    pass


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _call(ctx: click.Context, method: str, path: str, payload=None) -> dict:
    client = ctx.obj["client"]
    response = client.request(method, path, json=payload)
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise ServiceError(f"{path}: {detail}")
    return response.json() if response.content else {}


def _abs(path: str | None) -> str | None:
    return str(Path(path).resolve()) if path else None


def _config(path: str | None, **overrides) -> dict:
    config = load_config(path) if path else PipelineConfig()
    changes = {k: v for k, v in overrides.items() if v is not None}
    return config.replace(**changes).to_dict()


def _segment_line(uri: str, seg: dict) -> str:
    return format_rttm_line(uri, Segment(seg["onset"], seg["duration"]), seg["label"])


@click.group()
@click.option("--server", envvar="STREAMDIAR_SERVER", default=None,
              help="Base URL of a running service; in-process when omitted.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Online speaker diarization over a rolling buffer."""
    ctx.obj = {"client": _client(server)}


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--features", required=True, type=click.Path(exists=True, dir_okay=False),
              help="SDFE feature file, or a WAV file whose duration drives oracle features.")
@click.option("--segmentation", type=click.Path(exists=True, dir_okay=False))
@click.option("--embeddings", type=click.Path(exists=True, dir_okay=False))
@click.option("--ref", type=click.Path(exists=True, dir_okay=False),
              help="Reference RTTM for the oracle segmenter.")
@click.option("--latency", type=float)
@click.option("--tau-active", type=float)
@click.option("--output", type=click.Path(dir_okay=False))
@click.option("--emit", is_flag=True, help="Stream frames and print segments as they close.")
@click.option("--dump-centroids", type=click.Path(dir_okay=False))
@click.pass_context
def run_cmd(ctx, config_path, features, segmentation, embeddings, ref, latency, tau_active,
            output, emit, dump_centroids):
    """Diarize one recording and write RTTM."""
    config = _config(config_path, latency=latency, tau_active=tau_active)
    providers = {
        "reference_rttm": Path(ref).read_text() if ref else None,
        "segmentation_path": _abs(segmentation),
        "embeddings_path": _abs(embeddings),
    }
    is_wav = Path(features).suffix.lower() == ".wav"
    if emit and not is_wav:
        if dump_centroids:
            raise click.UsageError("--dump-centroids is not available with --emit")
        rttm = _run_streaming(ctx, config, providers, features)
    else:
        payload = {"config": config, "providers": providers, "dump_centroids": _abs(dump_centroids)}
        payload["audio_path" if is_wav else "features_path"] = _abs(features)
        result = _call(ctx, "POST", "/runs", payload)
        rttm = result["rttm"]
        if emit:
            sys.stdout.write(rttm)
        click.echo(f"{result['uri']}: {result['num_speakers']} speakers, "
                   f"{len(result['steps'])} windows", err=True)
    if output:
        Path(output).write_text(rttm)
    elif not emit:
        sys.stdout.write(rttm)


def _run_streaming(ctx, config: dict, providers: dict, features: str) -> str:
    grid = PipelineConfig.from_dict(config).grid
    dim, step, _ = read_matrix_header(features, FEATURES_MAGIC)
    if abs(step - grid.frame_step) > 1e-12:
        raise click.UsageError(f"feature frame step {step} != configured {grid.frame_step}")
    uri = Path(features).stem
    if providers["reference_rttm"]:
        uri = parse_rttm(providers["reference_rttm"]).uri or uri
    session = _call(ctx, "POST", "/sessions",
                    {"config": config, "providers": providers, "uri": uri})
    sid = session["session_id"]
    hop_frames = max(1, int(round(grid.hop / grid.frame_step)))
    for chunk in iter_matrix_chunks(features, FEATURES_MAGIC, hop_frames):
        pushed = _call(ctx, "POST", f"/sessions/{sid}/frames",
                       {"frames": np.asarray(chunk, dtype=np.float64).tolist()})
        for seg in pushed["segments"]:
            click.echo(_segment_line(uri, seg), nl=False)
    closed = _call(ctx, "POST", f"/sessions/{sid}/close")
    for seg in closed["segments"]:
        click.echo(_segment_line(uri, seg), nl=False)
    _call(ctx, "DELETE", f"/sessions/{sid}")
    return closed["rttm"]


@main.command("score")
@click.option("--ref", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hyp", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--bin", "bin_seconds", type=float, help="Also report local DER per bin of this length.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False),
              help="Write the CSV here instead of after the report.")
@click.pass_context
def score_cmd(ctx, ref, hyp, bin_seconds, csv_path):
    """Diarization error rate of a hypothesis against a reference."""
    result = _call(ctx, "POST", "/score", {"reference_rttm": Path(ref).read_text(),
                                           "hypothesis_rttm": Path(hyp).read_text(),
                                           "bin": bin_seconds})
    rows = [(f["uri"], f["scores"]) for f in result["files"]] + [("*", result["aggregate"])]
    click.echo(f"{'uri':<24}{'total':>10}{'fa':>10}{'miss':>10}{'conf':>10}{'DER %':>9}")
    for uri, s in rows:
        click.echo(f"{uri:<24}{s['total']:>10.3f}{s['false_alarm']:>10.3f}{s['missed']:>10.3f}"
                   f"{s['confusion']:>10.3f}{100 * s['der']:>9.2f}")
    for f in result["files"]:
        for point in f["curve"] or []:
            s = point["scores"]
            click.echo(f"  {f['uri']} [{point['time']:.1f}s] DER {100 * s['der']:.2f}%")
    lines = ["uri,fa,miss,conf,total,der"]
    lines += [f"{uri},{s['false_alarm']:.6f},{s['missed']:.6f},{s['confusion']:.6f},"
              f"{s['total']:.6f},{s['der']:.6f}" for uri, s in rows]
    csv = "\n".join(lines) + "\n"
    if csv_path:
        Path(csv_path).write_text(csv)
    else:
        click.echo()
        click.echo(csv, nl=False)


@main.command("tune")
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dev", "dev_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(dir_okay=False), help="Write the best config here.")
@click.pass_context
def tune_cmd(ctx, grid_path, dev_dir, config_path, output):
    """Grid search over config values on a directory of dev recordings."""
    result = _call(ctx, "POST", "/tune", {"grid": parse_grid(Path(grid_path).read_text()),
                                          "dev_dir": _abs(dev_dir),
                                          "config": _config(config_path)})
    for point in result["table"]:
        params = ", ".join(f"{k}={v}" for k, v in point["params"].items())
        click.echo(f"{params}: DER {100 * point['mean_der']:.2f}%")
    best = "\n".join(f"{k} = {v}" for k, v in result["best"].items()) + "\n"
    click.echo(f"best DER {100 * result['best_der']:.2f}%")
    if output:
        Path(output).write_text(best)
    else:
        click.echo(best, nl=False)


@main.command("bench")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--features", type=click.Path(exists=True, dir_okay=False))
@click.option("--ref", type=click.Path(exists=True, dir_okay=False))
@click.option("--repetitions", default=1, show_default=True, type=int)
@click.option("--speakers", default=4, show_default=True, type=int)
@click.option("--duration", default=60.0, show_default=True, type=float)
@click.option("--dim", default=256, show_default=True, type=int)
@click.option("--extra-centroids", default=16, show_default=True, type=int,
              help="Centroids preloaded before the stream starts.")
@click.pass_context
def bench_cmd(ctx, config_path, features, ref, repetitions, speakers, duration, dim,
              extra_centroids):
    """Per-step wall time statistics."""
    stats = _call(ctx, "POST", "/bench", {
        "config": _config(config_path), "repetitions": repetitions,
        "features_path": _abs(features), "reference_rttm": Path(ref).read_text() if ref else None,
        "speakers": speakers, "duration": duration, "dim": dim,
        "extra_centroids": extra_centroids})
    click.echo(json.dumps(stats, indent=2))


@main.group("fixtures")
def fixtures_group():
    """Synthetic conversations with oracle inputs."""


@fixtures_group.command("generate")
@click.option("--speakers", default=3, show_default=True, type=int)
@click.option("--duration", default=300.0, show_default=True, type=float)
@click.option("--overlap", default=0.1, show_default=True, type=float)
@click.option("--noise", default=0.0, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--dim", default=32, show_default=True, type=int)
@click.option("--shared", default=0.0, show_default=True, type=float,
              help="Common component of speaker signatures; higher is harder.")
@click.option("--out", "out_dir", default=".", show_default=True, type=click.Path(file_okay=False))
@click.option("--uri")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def generate_cmd(ctx, speakers, duration, overlap, noise, seed, dim, shared, out_dir, uri,
                 config_path):
    """Write reference RTTM, features and oracle segmentation for one conversation."""
    result = _call(ctx, "POST", "/fixtures", {
        "speakers": speakers, "duration": duration, "overlap": overlap, "noise": noise,
        "seed": seed, "dim": dim, "shared": shared, "out_dir": _abs(out_dir), "uri": uri,
        "config": _config(config_path)})
    for kind, path in result["paths"].items():
        click.echo(f"{kind}: {path}")
    click.echo(json.dumps(result["summary"]))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve_cmd(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("streamdiar.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
