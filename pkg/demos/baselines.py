"""Replay model vs plain LSTM vs logistic regression on the same test users."""
from intentforge.baselines import compare, train_logreg
from intentforge.data import class_weights, prepare_file
from intentforge.synth import GeneratorConfig, bayes_auc, generate
from intentforge.trainer import TrainConfig, train

gen = generate(GeneratorConfig(n_users=4000, seed=6))
split = prepare_file(gen.csv, seed=6)

model, _ = train(TrainConfig(max_epochs=10, seed=6), split)
# same network, minibatches in dataset order, no noise
plain, _ = train(TrainConfig(max_epochs=10, seed=6, replay_enabled=False, exploration_enabled=False), split)
logreg = train_logreg(split.train.model_input(), split.train.labels,
                      class_weights=class_weights(split.train.labels), seed=6, schema_digest=split.schema.digest)

print(compare(model, logreg, plain, split.test).to_text())
print(f"ceiling (true propensities): {bayes_auc(gen.truth):.4f}")
