"""A few minutes of joint training at toy scale, end to end.

Prepares the frozen artifacts (corpus, noise banks, enhancers, pretrained
encoder) for a deliberately small config, then trains the full system and
the fixed-encoder arm side by side. Along the way it checks the two
invariants the method relies on: the enhancers are never touched, and the
EMA shadow trails the live encoder instead of copying it.

    python demos/02_small_joint_training.py
"""
import torch

from ufema import training as T
from ufema.config import ExperimentConfig

torch.set_num_threads(1)

config = ExperimentConfig(
    n_speakers=6, train_utts_per_speaker=10, heldout_utts_per_speaker=2,
    n_unseen_speakers=4, unseen_utts_per_speaker=4, noise_bank_size=3, noise_bank_s=4.0,
    mask_train_pairs=24, mask_epochs=3, mask_hidden=32, unet_channels=[8, 16],
    pretrain_epochs=8, pretrain_batch_size=12, batch_size=12, epochs=3,
    embed_dim=32, encoder_channels=16, ema_alpha=0.9)

art = T.prepare_artifacts(config)
print(f"pretrained encoder, train accuracy {art.pretrain_accuracy:.3f}")
before = art.enhancer_hashes()

arms = T.ablation_arms(config)
full, fixed = T.train_many([config.with_overrides(**arms["All"]),
                            config.with_overrides(**arms["w/o EMA (Fixed)"])], art)
assert art.enhancer_hashes() == before == full.enhancer_hashes
print("enhancer weights unchanged by training")

live = torch.cat([p.detach().flatten() for p in full.ema.model.parameters()])
shadow = torch.cat([p.detach().flatten() for p in full.ema.shadow.parameters()])
start = torch.cat([p.detach().flatten() for p in art.encoder.parameters()])
print(f"after {full.ema.step} EMA updates: |live - start| {float((live - start).norm()):.3f}, "
      f"|shadow - start| {float((shadow - start).norm()):.3f}")

# four trial speakers: EERs here move in steps of several points
print(f"{'condition':<14}{'All':>8}{'Fixed':>8}")
rows = {name: T.evaluate_checkpoint(ck, art, T.TABLE2_CONDITIONS) for name, ck in
        (("All", full), ("Fixed", fixed))}
for a, b in zip(rows["All"], rows["Fixed"]):
    print(f"{a['condition'] + (' ' + str(a['snr_db']) if a['snr_db'] is not None else ''):<14}"
          f"{a['eer']:>8.3f}{b['eer']:>8.3f}")
