"""par-oracle: serve a hard-label model over stdio or TCP.

    par-oracle --model checksum:224x224x3:1000 --transport stdio
    par-oracle --model const:32x32x1:10:4 --transport tcp:0

tcp:0 picks an ephemeral port and reports "listening on PORT" on stderr.
A model spec that fails to load exits nonzero before any handshake.
"""

import argparse
import logging
import sys

from .models import ModelSpecError, load_model
from .server import serve_stdio, serve_tcp


def build_parser():
    p = argparse.ArgumentParser(prog="par-oracle",
                                description="hard-label model server")
    p.add_argument("--model", required=True,
                   help="model spec, e.g. checksum:HxWxC:N")
    p.add_argument("--transport", default="stdio",
                   help="stdio (default) or tcp:<port>")
    return p


def main(argv=None):
    logging.basicConfig(stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        model = load_model(args.model)
    except ModelSpecError as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    transport = args.transport.strip().lower()
    if transport == "stdio":
        serve_stdio(model)
        return 0
    if transport.startswith("tcp:"):
        try:
            port = int(transport[4:])
        except ValueError:
            print("error: bad tcp port in %r" % args.transport,
                  file=sys.stderr)
            return 2

        def announce(actual):
            print("listening on %d" % actual, file=sys.stderr)
            sys.stderr.flush()

        try:
            serve_tcp(model, port, announce=announce)
        except KeyboardInterrupt:
            pass
        return 0
    print("error: transport must be stdio or tcp:<port>, got %r"
          % args.transport, file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
