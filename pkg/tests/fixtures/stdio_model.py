"""Toy model speaking the line-delimited JSON protocol, for backend tests.

Usage: stdio_model.py CLASSES [MODE]. The predicted class is floor(mean pixel * CLASSES).
Modes: ok, error-second, exit-early, garbage, wrong-id, text-probs, hang.
"""

import json
import sys
import time


def respond(request: dict, classes: int) -> dict:
    pixels = request["pixels"]
    mean = sum(pixels) / len(pixels)
    top = min(int(mean * classes), classes - 1)
    rest = 0.1 / (classes - 1)
    probs = [0.9 if index == top else rest for index in range(classes)]
    return {"id": request["id"], "probs": probs}


def main() -> None:
    classes = int(sys.argv[1])
    mode = sys.argv[2] if len(sys.argv) > 2 else "ok"
    for count, line in enumerate(sys.stdin):
        request = json.loads(line)
        if mode == "exit-early":
            sys.exit(4)
        if mode == "hang":
            time.sleep(60)
        if mode == "garbage":
            print("not json", flush=True)
            continue
        if mode == "text-probs":
            print(json.dumps({"id": request["id"], "probs": ["high"] + ["low"] * (classes - 1)}), flush=True)
            continue
        if mode == "wrong-id":
            print(json.dumps({"id": "other", "probs": [1.0] + [0.0] * (classes - 1)}), flush=True)
            continue
        if mode == "error-second" and count == 1:
            print(json.dumps({"id": request["id"], "error": "cannot score"}), flush=True)
            continue
        print(json.dumps(respond(request, classes)), flush=True)


if __name__ == "__main__":
    main()
