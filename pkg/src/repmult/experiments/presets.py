"""Named experiment presets.

``paper`` carries the full grid (7 values per regime, 10 seeds, four-conv
network, IDX data). ``desk`` shrinks it to 3 values x 3 seeds on a synthetic
2000-sample dataset with a small two-conv network so a sweep runs in minutes.
"""

PAPER_LEARNING_RATES = (0.003, 0.002, 0.001, 0.0003, 0.0001, 0.00003, 0.00001)
PAPER_BATCH_SIZES = (8, 16, 32, 64, 128, 256, 512)
PAPER_FIXED_BATCH_SIZE = 64
PAPER_FIXED_LEARNING_RATE = 0.0001
PAPER_SEEDS = tuple(range(10))
PAPER_SUBSET_SIZE = 1000

OOD_DEFAULT = ("xflip", "pixelate", "jitter", "rot0-20", "rot90-110")

PRESETS = {
    "paper": {
        "data": {"source": "idx"},
        "ood": {"transforms": ", ".join(OOD_DEFAULT), "seed": "0"},
        "network": {"arch": "paper"},
        "training": {
            "regime": "learning_rate",
            "learning_rate": str(PAPER_FIXED_LEARNING_RATE),
            "batch_size": str(PAPER_FIXED_BATCH_SIZE),
            "seeds": ", ".join(map(str, PAPER_SEEDS)),
            "stopping": "risk_band",
            "epsilon": "0.01",
            "max_epochs": "100",
            "min_agreeing": "5",
            "workers": "1",
        },
        "analysis": {"taps": "cnn, fc1", "variance_fraction": "0.99", "top_t": "20",
                     "subset_size": str(PAPER_SUBSET_SIZE), "confab_n": "16", "confab_pool": "pooled",
                     "pcc_tap": "fc1"},
    },
    "desk": {
        "data": {"source": "synthetic", "classes": "4", "samples": "2000", "test_samples": "500",
                 "image_size": "14", "noise": "0.8", "seed": "0"},
        "ood": {"transforms": ", ".join(OOD_DEFAULT), "seed": "0"},
        "network": {"arch": "desk", "hidden": "64"},
        "training": {
            "regime": "learning_rate",
            "learning_rate": "0.001",
            "batch_size": "64",
            "seeds": "0, 1, 2",
            "stopping": "risk_band",
            "target_accuracy": "0.85",
            "epsilon": "0.01",
            "max_epochs": "300",
            "eval_every": "5",
            "min_agreeing": "5",
            "workers": "1",
        },
        "analysis": {"taps": "cnn, fc1", "variance_fraction": "0.99", "top_t": "20",
                     "confab_n": "16", "confab_pool": "pooled", "pcc_tap": "fc1"},
    },
}

REGIME_VALUES = {
    "paper": {"learning_rate": PAPER_LEARNING_RATES, "batch_size": PAPER_BATCH_SIZES},
    "desk": {"learning_rate": (0.003, 0.0003, 0.00003), "batch_size": (16, 64, 256)},
}
