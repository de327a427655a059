"""Train a small hybrid classifier, then attack it both ways.

Uses synthetic blobs so it runs in seconds with no data files. Run with
``python3 demos/attack_on_blobs.py``.
"""
from squashlab.attack import AttackConfig, AttackMode, run_attack
from squashlab.detector import detect
from squashlab.harness.data import make_blobs, stratified_split
from squashlab.harness.overhead import measure_overhead
from squashlab.hqnn import Readout, init_model, train

train_set, test_set = stratified_split(make_blobs(50, 2, 2, 0.3, seed=0), 0.2, seed=0)


def fit(mode: Readout):
    model = init_model(2, 2, mode, hidden=8, seed=0)
    model, history = train(model, train_set, test_set, epochs=30, lr=0.5, seed=0)
    print(f"{mode.value:>10} readout: train {history[-1].train.accuracy:.2f}, test {history[-1].test.accuracy:.2f}")
    return model


print("Clean training")
head_model = fit(Readout.HEAD)
sim_model = fit(Readout.SIMILARITY)

print("\nUntargeted: k malicious blocks in every inference circuit (head readout)")
for k in (1, 2, 3):
    outcome = run_attack(head_model, test_set, AttackConfig(swap_blocks=k, seed=0))
    print(f"  k={k}: accuracy {outcome.clean.accuracy:.2f} -> {outcome.attacked.accuracy:.2f}, "
          f"NLL {outcome.clean.nll:.3f} -> {outcome.attacked.nll:.3f}")
print("  (blocks interact: a later SWAP with the ancilla can move amplitude back,")
print("   so on a single draw a larger k can hurt less than a smaller one)")

print("\nTargeted: tamper with class 0 and push its samples to the other class (similarity readout)")
outcome = run_attack(sim_model, test_set, AttackConfig(AttackMode.TARGETED, target_class=0, seed=0))
for cls in range(2):
    print(f"  class {cls}: accuracy {outcome.clean.per_class_accuracy[cls]:.2f} "
          f"-> {outcome.attacked.per_class_accuracy[cls]:.2f}")
converged = sum(r.converged for r in outcome.reports)
print(f"  perturbation runs converged: {converged}/{len(outcome.reports)}")
print(f"  first run: F_t {outcome.report.f_t_before:.3f} -> {outcome.report.f_t_after:.3f}, "
      f"F_c {outcome.report.f_c_before:.3f} -> {outcome.report.f_c_after:.3f}")
print("  (phases alone cannot always lift F_t over F_c; such runs report non-convergence")
print("   instead of a fake success. demos/mnist2.ini shows the attack landing on MNIST-2)")

print("\nThe price of the attack: gate and time overhead after SWAP lowering")
attacks = [None, AttackConfig(AttackMode.TARGETED, seed=0), AttackConfig(swap_blocks=3, seed=0)]
for row in measure_overhead(head_model, train_set, attacks, repetitions=10):
    print(f"  {row.label:>16}: {row.total_gates} gates (+{row.gate_overhead_pct:.0f}%), "
          f"{1e3 * row.mean_seconds:.2f} ms per pass (+{row.time_overhead_pct:.0f}%)")

print("\nBut the detector sees both:")
for cfg in attacks[1:]:
    hit = run_attack(head_model, test_set, cfg)
    cls = cfg.target_class if cfg.mode is AttackMode.TARGETED else 0
    rep = detect(hit.clean_circuits.classes[cls][0], hit.circuits.classes[cls][0])
    print(f"  {cfg.label:>16}: {rep.verdict.value} ({rep.rationale})")
