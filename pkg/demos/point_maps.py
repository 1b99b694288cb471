"""Train the minimax solver on two problems with known answers.

Uniform[0,1] -> Uniform[2,3] has the optimal map x + 2, and
N(0, I) -> N(m, S) has an affine one. Both runs use the bundled configs,
shortened here to a few epochs so the script finishes in about a minute.

    python demos/point_maps.py
"""

from pathlib import Path

from rcot.cli import final_report, load_config, run_training

configs = Path(__file__).resolve().parent.parent / "configs"

for name in ("quantile_1d", "gaussian_2d"):
    cfg = load_config(configs / f"{name}.yaml").with_train(epochs=6, lr_decay_epoch=4)
    result, task, diverged = run_training(cfg)
    report = final_report(cfg, task, result.map)
    print(name)
    for k, v in sorted(report.items()):
        print(f"  {k:>16} {v:.4f}")

# The full-length runs (what the acceptance tests use):
#   rcot train configs/quantile_1d.yaml
#   rcot train configs/gaussian_2d.yaml
