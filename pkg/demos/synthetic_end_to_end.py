"""Generate a clickstream, prepare it, train with replay + exploration, score the test users."""
import logging
import sys

from intentforge.data import prepare_file
from intentforge.engine import predict_proba
from intentforge.metrics import confusion, format_report, report, roc_auc
from intentforge.synth import GeneratorConfig, bayes_auc, generate
from intentforge.trainer import TrainConfig, train

logging.basicConfig(level=logging.INFO, format="%(message)s")
epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 15

# ~20k sessions, about one in six ending in a purchase
gen = generate(GeneratorConfig(n_users=10_000, seed=1))
print(f"{len(gen.truth)} sessions, positive rate {gen.positive_rate:.4f}")

# purchase events are cut off before featurizing, and users never straddle parts
split = prepare_file(gen.csv, seed=1)
print(f"train/val/test = {len(split.train)}/{len(split.validation)}/{len(split.test)}, "
      f"state size {split.schema.state_size}")

ckpt, history = train(TrainConfig(max_epochs=epochs, patience=min(10, epochs), seed=1), split)
print(f"best epoch {ckpt.best_epoch}, validation loss {ckpt.val_loss:.4f}")

probs = predict_proba(ckpt.params, split.test.model_input())
cm = confusion(probs, split.test.labels, 0.5)
print(format_report(cm, report(cm), 0.5))
# the true propensities bound what any model can reach
print(f"test AUC {roc_auc(probs, split.test.labels).auc:.4f}  vs  ceiling {bayes_auc(gen.truth):.4f}")
