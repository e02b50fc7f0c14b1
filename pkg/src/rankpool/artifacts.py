"""On-disk formats for trained scorers and network checkpoints.

Scorer artifact (one per trained network, JSON):

    {
      "format": "rankpool-scorer-v1",
      "layers": {
        "<layer index>": {
          "projection": {
            "d": int, "c": int, "lambda_reg": float,
            "a": [d*c floats, row-major],
            "iterations": int, "final_objective": float,
            "final_orth_residual": float
          },
          "ranking": {
            "c": int, "bins": int,
            "columns": [
              {"lo": float, "hi": float, "column_kl": float,
               "fg_mass": [bins floats], "bg_mass": [bins floats]}
            ]
          }
        }
      }
    }

Floats survive the JSON round trip exactly (shortest-repr encoding).
Checkpoints are plain .npz archives keyed w<i>/b<i> by layer index.
"""

import json
from pathlib import Path

import numpy as np

from .projection import FitMeta, Projection
from .ranking import HistogramDensity, RankingModel

SCORER_FORMAT = "rankpool-scorer-v1"


def _projection_to_dict(proj):
    return {
        "d": proj.a.shape[0],
        "c": proj.a.shape[1],
        "lambda_reg": proj.lambda_reg,
        "a": proj.a.reshape(-1).tolist(),
        "iterations": proj.fit_meta.iterations,
        "final_objective": proj.fit_meta.final_objective,
        "final_orth_residual": proj.fit_meta.final_orth_residual,
    }


def _projection_from_dict(blob):
    a = np.asarray(blob["a"], dtype=np.float64).reshape(blob["d"], blob["c"])
    meta = FitMeta(
        iterations=blob["iterations"],
        final_objective=blob["final_objective"],
        final_orth_residual=blob["final_orth_residual"],
        objective_trace=[],
    )
    return Projection(a=a, lambda_reg=blob["lambda_reg"], fit_meta=meta)


def _ranking_to_dict(model):
    columns = []
    for i in range(model.c):
        fg, bg = model.fg_density[i], model.bg_density[i]
        columns.append(
            {
                "lo": fg.lo,
                "hi": fg.hi,
                "column_kl": float(model.column_kl[i]),
                "fg_mass": fg.mass.tolist(),
                "bg_mass": bg.mass.tolist(),
            }
        )
    return {"c": model.c, "bins": model.bins, "columns": columns}


def _ranking_from_dict(blob):
    fg_density, bg_density, kl = [], [], []
    for col in blob["columns"]:
        common = dict(lo=col["lo"], hi=col["hi"], bins=blob["bins"])
        fg_density.append(
            HistogramDensity(mass=np.asarray(col["fg_mass"]), **common)
        )
        bg_density.append(
            HistogramDensity(mass=np.asarray(col["bg_mass"]), **common)
        )
        kl.append(col["column_kl"])
    return RankingModel(
        c=blob["c"],
        fg_density=fg_density,
        bg_density=bg_density,
        column_kl=np.asarray(kl),
        bins=blob["bins"],
    )


def save_scorers(path, scorers):
    """Write {layer index: (Projection, RankingModel)} as a JSON artifact."""
    layers = {
        str(idx): {
            "projection": _projection_to_dict(proj),
            "ranking": _ranking_to_dict(model),
        }
        for idx, (proj, model) in sorted(scorers.items())
    }
    payload = {"format": SCORER_FORMAT, "layers": layers}
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def load_scorers(path):
    """Inverse of save_scorers."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != SCORER_FORMAT:
        raise ValueError(f"{path}: not a {SCORER_FORMAT} artifact")
    return {
        int(idx): (
            _projection_from_dict(blob["projection"]),
            _ranking_from_dict(blob["ranking"]),
        )
        for idx, blob in payload["layers"].items()
    }


def save_checkpoint(path, net):
    """Store conv/fc parameters of a network as an .npz archive."""
    arrays = {}
    for idx, p in enumerate(net.params):
        if p is not None:
            arrays[f"w{idx}"] = p["w"]
            arrays[f"b{idx}"] = p["b"]
    np.savez(path, **arrays)


def load_checkpoint(path, net):
    """Load parameters saved by save_checkpoint into a compatible network."""
    with np.load(path) as blob:
        for idx, p in enumerate(net.params):
            if p is None:
                continue
            w, b = blob[f"w{idx}"], blob[f"b{idx}"]
            if w.shape != p["w"].shape or b.shape != p["b"].shape:
                raise ValueError(f"checkpoint layer {idx} shape mismatch")
            p["w"] = w
            p["b"] = b
    return net
