"""Run the denoiser service under uvicorn."""

import argparse

import uvicorn

from texforge_backend.service import create_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="texforge-backend",
                                     description="latent denoiser HTTP service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8750)
    parser.add_argument("--model", default="deterministic",
                        help="engine identifier (default: deterministic)")
    args = parser.parse_args(argv)
    uvicorn.run(create_app(model=args.model), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
