# Checking the model assumptions before trusting any asymptotics.
from lifeperiod import deterministic_critical, example2, stable_preset, validate_hypothesis_A2, validate_hypothesis_A3

for model in (example2(), stable_preset(1.5, 1), deterministic_critical()):
    a2 = validate_hypothesis_A2(model)
    a3 = validate_hypothesis_A3(model)
    h = model.hypothesis
    print(f"{model.name}: kappa={h.kappa}, gamma={h.gamma}, sigma={h.sigma}")
    print(f"  immigration/offspring bound: {'pass' if a2.passed else 'fail'} (worst margin {a2.worst_margin:.3g} at s={a2.worst_s:.3g})")
    print(f"  walk condition: {a3.status}, rho used {a3.rho_used}")
    for note in a3.notes:
        print("   -", note)
