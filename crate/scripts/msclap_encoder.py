#!/usr/bin/env python3
"""JSON-lines encoder process for the MS-CLAP checkpoints.

Spawned by the msclap2022 / msclap2023 backends. Needs `pip install msclap`.

    python3 msclap_encoder.py --version 2023 [--weights CLAP_weights_2023.pth]
"""

import argparse
import json
import random
import sys


def reply(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def seed_everything(seed, torch, np):
    # msclap crops clips longer than the model window at a random offset
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def to_lists(tensor):
    return tensor.detach().cpu().double().tolist()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--version", choices=["2022", "2023"], required=True)
    ap.add_argument("--weights", default=None)
    ap.add_argument("--cuda", action="store_true")
    args = ap.parse_args()

    try:
        import numpy as np
        import torch
        from msclap import CLAP

        kwargs = {"version": args.version, "use_cuda": args.cuda}
        if args.weights:
            kwargs["model_fp"] = args.weights
        model = CLAP(**kwargs)
        with torch.no_grad():
            probe = model.get_text_embeddings(["a sound"])
        dimension = int(probe.shape[-1])
        sample_rate = int(getattr(model.args, "sampling_rate", 44100))
    except Exception as e:  # report instead of dying before the handshake
        reply({"ready": False, "error": f"{type(e).__name__}: {e}"})
        return 1

    reply(
        {
            "ready": True,
            "model": f"msclap-{args.version}",
            "dimension": dimension,
            "sample_rate": sample_rate,
            "seed_sensitive": True,
        }
    )

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            seed_everything(int(req.get("seed", 0)), torch, np)
            with torch.no_grad():
                if req["op"] == "text":
                    out = model.get_text_embeddings(req["texts"])
                elif req["op"] == "audio":
                    out = model.get_audio_embeddings(req["paths"])
                else:
                    raise ValueError(f"unknown op {req['op']!r}")
            reply({"embeddings": to_lists(out)})
        except Exception as e:
            reply({"error": f"{type(e).__name__}: {e}"})
    return 0


if __name__ == "__main__":
    sys.exit(main())
