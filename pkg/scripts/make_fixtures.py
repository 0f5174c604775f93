"""Regenerate the CLI test fixtures under tests/fixtures.

    python scripts/make_fixtures.py [--out tests/fixtures]

Everything is produced by ``sgloop`` itself from fixed seeds, so rerunning
this on a clean checkout should leave ``git status`` unchanged.
"""

import argparse
import shutil
from pathlib import Path

import numpy as np

from sgloop import io
from sgloop.bench import session_batches
from sgloop.cli import main
from sgloop.synth import Placement, SceneSpec, generate_scene

SPEC = """\
scene:
  width: 4.5
  depth: 4.0
  twins: 1
  placements:
    - {label: lamp, count: 1, spacing: random}
    - {label: tv, count: 1, spacing: wall}
    - {label: shelf, count: 1, spacing: wall}
perturbation:
  transform: {yaw_deg: 40.0, translation: [1.5, -0.5, 0.1]}
  relabel_ids: true
"""

CONFIG = """\
match:
  epsilon: 4
descriptor:
  n_walks: 200
"""


def run(*argv):
    code = main([str(a) for a in argv])
    if code:
        raise SystemExit(f"sgloop {' '.join(map(str, argv))} exited {code}")


def make(out: Path) -> None:
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    (out / "spec.yaml").write_text(SPEC)
    (out / "config.yaml").write_text(CONFIG)

    # raw segments for `build`: one small room streamed in two batches
    g, _ = generate_scene(SceneSpec(placements=(Placement("table"), Placement("chair", 2)), seed=1))
    for k, batch in enumerate(session_batches(g, 2, np.random.default_rng(0))):
        io.save_segments(batch, out / f"segments_{k}.json", session_id="built" if k == 0 else None)

    run("synth", "--spec", out / "spec.yaml", "--out-dir", out / "pair", "--seed", 3)
    run("synth", "--scenario", "ambiguity", "--out-dir", out / "ambiguity", "--seed", 0)
    pair = out / "pair"
    run("match", pair / "active.json", pair / "inactive.json", "-o", pair / "match.json")
    run("register", pair / "match.json", pair / "active.json", pair / "inactive.json", "-o", pair / "registered.json")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "tests" / "fixtures", type=Path)
    make(ap.parse_args().out)
