"""Design grid shared by the experiment scripts: every (setup, n, d, k) cell."""

from aml.simulator import SetupConfig

SIGNAL_DIMS = {1: (3, 4), 2: (1, 2), 3: (3, 4), 4: (4, 5)}


def cells(setups=(1, 2, 3, 4), ns=(600, 1200), ds=(6, 12), seed=0):
    for s in setups:
        for n in ns:
            for d in ds:
                for k in SIGNAL_DIMS[s]:
                    yield SetupConfig(s, n, d, k, seed)
