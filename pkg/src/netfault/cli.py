"""Thin command-line client for the netfault service.

Every subcommand is a single POST against the service API.  Without --server
the app is mounted in-process (no daemon needed for batch pipelines); with
--server URL the same requests go to a running instance that shares the
filesystem paths being passed.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import asyncio
import json
import sys

import click
import httpx


class DataError(Exception):
    pass


def _post(server: str | None, path: str, payload: dict) -> dict:
    if server:
        resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
    else:
        from .service import app

        async def go():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://netfault") as client:
                return await client.post(path, json=payload, timeout=None)

        resp = asyncio.run(go())
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise DataError(f"{path}: {detail}")
    return resp.json()


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default runs the service in-process.")
@click.pass_context
def cli(ctx, server):
    """Network fault localization: topology generation, failure simulation,
    inference, calibration, evaluation and benchmarks."""
    ctx.obj = {"server": server}


# -- topo ---------------------------------------------------------------------


@cli.group()
def topo():
    """Topology generation."""


@topo.command("gen")
@click.option("--kind", type=click.Choice(["fat-tree", "two-tier"]), default="fat-tree")
@click.option("--k", type=int, default=4, help="Fat-tree degree (even).")
@click.option("--hosts-per-tor", type=int, default=1)
@click.option("--spines", type=int, default=2)
@click.option("--leaves", type=int, default=8)
@click.option("--hosts-per-leaf", type=int, default=6)
@click.option("--omit", "omit_fraction", type=float, default=0.0,
              help="Fraction of inter-switch links to remove.")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def topo_gen(ctx, **kw):
    data = _post(ctx.obj["server"], "/topology/generate", kw)
    click.echo(f"wrote {data['out_path']} ({data['devices']} switches, "
               f"{data['hosts']} hosts, {data['links']} links, "
               f"checksum {data['checksum'][:12]})")


# -- sim ----------------------------------------------------------------------


@cli.group()
def sim():
    """Flow-level failure simulation."""


@sim.command("run")
@click.option("--topo", "topo_path", required=True, type=click.Path())
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--pattern", type=click.Choice(["uniform", "skewed"]), default="uniform")
@click.option("--flows", type=int, default=10000)
@click.option("--probes", type=float, default=0.0, help="Probes per host per window.")
@click.option("--probe-packets", type=int, default=100)
@click.option("--noise", "noise_drop_max", type=float, default=1e-4)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def sim_run(ctx, **kw):
    data = _post(ctx.obj["server"], "/simulate", kw)
    click.echo(f"wrote {data['out_path']} ({data['app_flows']} app flows, "
               f"{data['probes']} probes, {data['failed_components']} ground-truth entries)")


# -- infer ----------------------------------------------------------------------


@cli.command("infer")
@click.option("--trace", "trace_path", required=True, type=click.Path())
@click.option("--topo", "topo_path", required=True, type=click.Path())
@click.option("--kind", default="INT", help="Input kind: A1, A2, P, INT or e.g. A1+P.")
@click.option("--params", "params_path", default=None, type=click.Path())
@click.option("--scheme", type=click.Choice(["flock", "sherlock", "vote007"]),
              default="flock")
@click.option("--no-jle", "use_jle", flag_value=False, default=True,
              help="Recompute candidate likelihoods from scratch (reference path).")
@click.option("--sherlock-k", type=int, default=2)
@click.option("--vote-threshold", type=float, default=0.5)
@click.option("--per-flow", is_flag=True, default=False,
              help="Binarize flows by RTT threshold before inference.")
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--iter-csv", "iterations_csv_path", default=None, type=click.Path())
@click.pass_context
def infer_cmd(ctx, **kw):
    data = _post(ctx.obj["server"], "/infer", kw)
    comps = data["components"]
    click.echo(f"predicted {len(comps)} failed component(s): "
               f"{' '.join(str(c) for c in comps) if comps else '(none)'}")
    if data.get("reduced"):
        click.echo(f"class-level findings: {len(data['class_findings'])} class(es)")
    if data.get("out_path"):
        click.echo(f"wrote {data['out_path']}")


# -- calibrate ---------------------------------------------------------------------


@cli.command("calibrate")
@click.option("--scheme", type=click.Choice(["flock", "sherlock", "vote007"]),
              required=True)
@click.option("--train", "train_glob", required=True,
              help="Glob of labeled training traces.")
@click.option("--kind", required=True)
@click.option("--topo", "topo_path", required=True, type=click.Path())
@click.option("--sherlock-k", type=int, default=2)
@click.option("--out", "out_params_path", default=None, type=click.Path())
@click.option("--frontier", "frontier_csv_path", default=None, type=click.Path())
@click.pass_context
def calibrate_cmd(ctx, **kw):
    data = _post(ctx.obj["server"], "/calibrate", kw)
    click.echo(f"operating point: precision {data['precision']:.4f} "
               f"recall {data['recall']:.4f} (floor {data['precision_floor']:.2f}, "
               f"frontier size {data['frontier_size']})")
    if data.get("params"):
        click.echo("params: " + json.dumps(data["params"]))
    if data.get("threshold") is not None:
        click.echo(f"threshold: {data['threshold']}")
    if data.get("out_params_path"):
        click.echo(f"wrote {data['out_params_path']}")


# -- eval --------------------------------------------------------------------------


@cli.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path())
@click.option("--trace", "trace_path", required=True, type=click.Path())
@click.option("--topo", "topo_path", required=True, type=click.Path())
@click.option("--class-level", is_flag=True, default=False)
@click.pass_context
def eval_cmd(ctx, **kw):
    data = _post(ctx.obj["server"], "/evaluate", kw)
    click.echo("# schema-version 1")
    if kw["class_level"]:
        click.echo("precision,recall,fscore,class_precision,class_recall")
        click.echo(f"{data['precision']!r},{data['recall']!r},{data['fscore']!r},"
                   f"{data['class_precision']!r},{data['class_recall']!r}")
    else:
        click.echo("precision,recall,fscore")
        click.echo(f"{data['precision']!r},{data['recall']!r},{data['fscore']!r}")


# -- bench -------------------------------------------------------------------------


@cli.command("bench")
@click.option("--topo", "topo_path", required=True, type=click.Path())
@click.option("--trace", "trace_paths", required=True, multiple=True, type=click.Path())
@click.option("--kind", "kinds", multiple=True, default=("INT",))
@click.option("--params", "params_path", default=None, type=click.Path())
@click.option("--scheme", "schemes", multiple=True,
              default=("flock", "flock-naive", "sherlock", "sherlock-naive", "vote007"))
@click.option("--repeats", type=int, default=3)
@click.option("--no-warmup", "warmup", flag_value=False, default=True)
@click.option("--sherlock-k", type=int, default=2)
@click.option("--budget", "scan_budget", type=int, default=10 ** 8)
@click.option("--out", "out_csv_path", default=None, type=click.Path())
@click.pass_context
def bench_cmd(ctx, **kw):
    kw["trace_paths"] = list(kw["trace_paths"])
    kw["kinds"] = list(kw["kinds"])
    kw["schemes"] = list(kw["schemes"])
    data = _post(ctx.obj["server"], "/bench", kw)
    for row in data["rows"]:
        mark = " (estimated)" if row["estimated"] else ""
        click.echo(f"{row['trace']} {row['kind']} {row['scheme']}: "
                   f"{row['wall_time_s']:.4f}s, scanned {row['hypotheses_scanned']}{mark}")
    if data.get("out_csv_path"):
        click.echo(f"wrote {data['out_csv_path']}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except DataError as e:
        click.echo(f"error: {e}", err=True)
        return 2
    except httpx.HTTPError as e:
        click.echo(f"error: {e}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
