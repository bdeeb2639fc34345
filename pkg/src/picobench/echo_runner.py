"""Reference child for the subprocess backend.

Answers every inference request with a fixed label and confidence. Real model
runners (a TFLite interpreter wrapper, say) implement the same loop; the
failure flags exist so the harness error paths can be exercised.

    python -m picobench.echo_runner --label yes --confidence 0.99
"""

import argparse
import base64
import json
import sys
import time


def emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="echo")
    ap.add_argument("--label", default="yes")
    ap.add_argument("--confidence", type=float, default=0.99)
    ap.add_argument("--raw-scores", default=None,
                    help="comma-separated scores echoed back as raw_scores")
    ap.add_argument("--delay-ms", type=float, default=0.0)
    ap.add_argument("--die-after", type=int, default=None,
                    help="exit without answering once this many requests were served")
    ap.add_argument("--bad-id", action="store_true", help="answer with a wrong request id")
    ap.add_argument("--no-ready", action="store_true", help="never complete the handshake")
    ap.add_argument("--garbage", action="store_true", help="answer requests with non-JSON")
    args = ap.parse_args(argv)

    served = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        kind = msg.get("type")
        if kind == "hello":
            if args.no_ready:
                continue
            emit({"type": "ready", "model": args.model})
        elif kind == "infer":
            if args.die_after is not None and served >= args.die_after:
                print(f"echo_runner: exiting after {served} requests", file=sys.stderr)
                return 3
            if args.garbage:
                sys.stdout.write("not json\n")
                sys.stdout.flush()
                continue
            n_bytes = len(base64.b64decode(msg["data"]))
            if args.delay_ms:
                time.sleep(args.delay_ms / 1000.0)
            reply = {"type": "result", "id": msg["id"] + (1 if args.bad_id else 0),
                     "label": args.label, "confidence": args.confidence}
            if args.raw_scores:
                reply["raw_scores"] = [float(v) for v in args.raw_scores.split(",")]
            served += 1
            if served == 1:
                print(f"echo_runner: first request is {n_bytes} bytes", file=sys.stderr)
            emit(reply)
        elif kind == "shutdown":
            break
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except BrokenPipeError:  # parent went away
        sys.stdout = None
        sys.exit(0)
