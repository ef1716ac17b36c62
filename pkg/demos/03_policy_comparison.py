"""Compare stimulation policies in a synthetic patient.

Seizures arrive as a self-exciting point process whose rate follows the time of
day and the program in force. A program that locks the healthy rhythm 1:1 is
assumed to lower the rate; one that can drive the pathological band raises it.
Each policy is simulated many times and the seizure counts are compared with a
one-tailed rank test.

Run:  python3 demos/03_policy_comparison.py
"""

from chronostim.harness import POLICY_PRESETS, compare_policies

pairs = [("chronotherapy-no-tap", "neutral"), ("chronotherapy", "chronotherapy-no-tap"),
         ("chronotherapy-no-tap", "low-frequency-2hz")]

for a, b in pairs:
    c = compare_policies(POLICY_PRESETS[a], POLICY_PRESETS[b], n_reps=40, seed=7, days=30, workers=4)
    print(f"{a} vs {b}")
    print(f"  mean seizures / 30 days: {c.a.mean_seizures:.1f} vs {c.b.mean_seizures:.1f}")
    print(f"  one-tailed p (A fewer): {c.test.p_one_tailed:.3g}")
    if c.a.attempts:
        print(f"  carer taps: {c.a.successes}/{c.a.attempts} interrupted")
