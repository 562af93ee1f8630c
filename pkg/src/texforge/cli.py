"""Command-line front end.

The CLI is a thin client over the service handlers: every subcommand
marshals its flags into the same request models the HTTP routes accept and
either executes them in-process (default) or posts them to a running
service given via --engine.

Exit codes: 0 success, 2 bad usage or configuration, 3 runtime failure
(including an interrupted run, which still flushes completed views).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys

from texforge.errors import ConfigError, ParseError, TexforgeError
from texforge.service import schemas
from texforge.service.app import handle_augment, handle_dataset, handle_edit, handle_texture

log = logging.getLogger("texforge")


class _StopFlag:
    """Set by SIGINT/SIGTERM; the pipeline finishes the current view first."""

    def __init__(self):
        self.stopped = False

    def install(self):
        signal.signal(signal.SIGINT, self._handle)
        signal.signal(signal.SIGTERM, self._handle)
        return self

    def _handle(self, signum, frame):
        if self.stopped:  # second signal: give up immediately
            raise KeyboardInterrupt
        self.stopped = True
        log.warning("signal received; finishing current view then flushing")

    def __call__(self):
        return self.stopped


def _parse_overrides(pairs: list[str] | None) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _env_backend(explicit: str | None) -> str | None:
    return explicit if explicit is not None else os.environ.get("TEXFORGE_BACKEND")


def _post(engine: str, path: str, model) -> dict:
    import httpx

    resp = httpx.post(engine.rstrip("/") + path, json=model.model_dump(), timeout=None)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise TexforgeError(f"engine returned {resp.status_code}: {detail}")
    return resp.json()


def _run_texture(args) -> int:
    req = schemas.TextureRequest(
        mesh_path=args.mesh,
        prompt=args.prompt,
        out_dir=args.out,
        seed=args.seed,
        backend=_env_backend(args.backend),
        config_path=args.config,
        overrides=_parse_overrides(args.set),
    )
    if args.engine:
        out = _post(args.engine, "/v1/texture", req)
    else:
        stop = _StopFlag().install()
        out = handle_texture(req, should_stop=stop).model_dump()
        if stop.stopped:
            print(json.dumps(out, indent=2))
            print("interrupted: partial run flushed", file=sys.stderr)
            return 3
    print(json.dumps(out, indent=2))
    return 0


def _run_edit(args) -> int:
    req = schemas.EditRequest(
        mesh_path=args.mesh,
        run_dir=args.run,
        prompt=args.prompt,
        out_dir=args.out,
        region_path=args.region,
        scribbled_path=args.scribbled,
        seed=args.seed,
        backend=_env_backend(args.backend),
        config_path=args.config,
        overrides=_parse_overrides(args.set),
    )
    if args.engine:
        out = _post(args.engine, "/v1/edit", req)
    else:
        stop = _StopFlag().install()
        out = handle_edit(req, should_stop=stop).model_dump()
        if stop.stopped:
            print(json.dumps(out, indent=2))
            print("interrupted: partial run flushed", file=sys.stderr)
            return 3
    print(json.dumps(out, indent=2))
    return 0


def _run_augment(args) -> int:
    req = schemas.AugmentRequest(
        mesh_path=args.mesh,
        out_path=args.out_mesh,
        seed=args.seed if args.seed is not None else 0,
        k=args.k,
        amplitude=args.amplitude,
    )
    out = _post(args.engine, "/v1/augment", req) if args.engine else handle_augment(req).model_dump()
    print(json.dumps(out, indent=2))
    return 0


def _run_dataset(args) -> int:
    req = schemas.DatasetRequest(
        mesh_path=args.mesh,
        run_dir=args.run,
        subject=args.subject,
        out_dir=args.out,
        count=args.count,
        config_path=args.config,
        overrides=_parse_overrides(args.set),
    )
    out = _post(args.engine, "/v1/dataset", req) if args.engine else handle_dataset(req).model_dump()
    print(json.dumps(out, indent=2))
    return 0


def _run_serve(args) -> int:
    import uvicorn

    from texforge.service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def _run_dump_config(args) -> int:
    from texforge.config import RunConfig

    sys.stdout.write(RunConfig().to_toml())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texforge", description="Text-guided mesh texturing")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, engine=True):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (JSON-typed value)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--backend", default=None,
                       help="denoiser backend: 'mock' or a service URL "
                            "(default from TEXFORGE_BACKEND)")
        if engine:
            p.add_argument("--engine", default=None,
                           help="URL of a running texforge service to delegate to")

    p = sub.add_parser("texture", help="texture a mesh from a prompt")
    p.add_argument("--mesh", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--out", required=True, help="run directory to create")
    common(p)
    p.set_defaults(func=_run_texture)

    p = sub.add_parser("edit", help="repaint part of an existing texture")
    p.add_argument("--mesh", required=True)
    p.add_argument("--run", required=True, help="finished run directory to edit")
    p.add_argument("--prompt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--region", default=None, help="PNG mask of atlas texels to repaint")
    p.add_argument("--scribbled", default=None, help="atlas copy with strokes painted on")
    common(p)
    p.set_defaults(func=_run_edit)

    p = sub.add_parser("augment", help="write a smooth geometric variant of a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--out-mesh", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--amplitude", type=float, default=0.05)
    p.add_argument("--engine", default=None)
    p.set_defaults(func=_run_augment)

    p = sub.add_parser("dataset", help="render a captioned image set from a run")
    p.add_argument("--mesh", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--subject", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None,
                   help="augmentation rounds (6 images per round)")
    common(p)
    p.set_defaults(func=_run_dataset)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8630)
    p.set_defaults(func=_run_serve)

    p = sub.add_parser("dump-config", help="print the default configuration as TOML")
    p.set_defaults(func=_run_dump_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("aborted", file=sys.stderr)
        return 3
    except TexforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
