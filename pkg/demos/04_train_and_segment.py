"""End to end: generate scenes, train briefly, evaluate all three tasks.

Writes everything under ./demo_out: the dataset, the loss trace, the
checkpoint, the reports, and a PGM mask image of the first held-out
scene. A few hundred steps on clean scenes already give usable masks;
the acceptance-scale run in the test suite trains longer on noisier
scenes.
"""

from pathlib import Path

from slotwalks.data import SceneConfig, generate_scene, write_feature_file
from slotwalks.infer import evaluate_discovery, evaluate_foreground, semantic_segment, slot_masks, write_mask_pgm
from slotwalks.train import TrainConfig, train

out = Path("demo_out")
(out / "scenes").mkdir(parents=True, exist_ok=True)

scene_cfg = SceneConfig(height=8, width=8, classes=3, feature_dim=32, noise_std=0.05)
train_scenes = [generate_scene(scene_cfg, seed=(0, i)) for i in range(60)]
holdout = [generate_scene(scene_cfg, seed=(1, i)) for i in range(10)]
for i, scene in enumerate(holdout):
    scene.name = f"holdout_{i:02d}"
    write_feature_file(out / "scenes" / f"{i:04d}.ocwf", scene)
print(f"generated {len(train_scenes)} training and {len(holdout)} held-out scenes")

cfg = TrainConfig(
    num_slots=3, input_dim=32, slot_dim=64, walk_dim=64, iterations=3,
    warmup_steps=50, total_steps=400, batch_size=16, base_lr=0.002, seed=0,
)
result = train(train_scenes, cfg, out_dir=out)
print(f"trained {result.steps_run} steps: loss {result.losses[0]:.3f} -> {result.losses[-1]:.3f}")

walk = cfg.walk()
fg = evaluate_foreground(holdout, result.params, result.proj, walk, cfg.iterations)
disc = evaluate_discovery(holdout, result.params, result.proj, walk, cfg.iterations)
sem = semantic_segment(holdout, result.params, result.proj, walk, cfg.iterations, num_classes=3)
print(f"foreground  mIoU {fg.summary['miou']:.3f}  Dice {fg.summary['dice']:.3f}")
print("  (three slots on two foreground classes: the selected slot covers one class;")
print("   dedicated foreground runs use num_slots = 2, see configs/foreground_k2.cfg)")
print(f"discovery   ARI-FG {disc.summary['ari_fg']:.3f}")
print(f"semantic    mean IoU {sem.summary['iou']:.3f}")

(out / "fg_report.txt").write_text(fg.to_text())
_, hard = slot_masks(holdout[0].features, result.params, result.proj, walk, cfg.iterations)
write_mask_pgm(hard, scene_cfg.height, scene_cfg.width, out / "holdout_00_mask.pgm",
               num_labels=cfg.num_slots)
print(f"wrote {out}/fg_report.txt and {out}/holdout_00_mask.pgm")
