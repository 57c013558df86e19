import numpy as np
import pytest

from trendlab import DoseResponseTable, parse_table

# incidence of squamous cell papilloma in mice over acrylamide doses (2-by-k)
ACRYLAMIDE_CSV = (
    "dose,events,trials\n"
    "0,0,46\n"
    "0.0875,2,45\n"
    "0.175,2,46\n"
    "0.35,6,47\n"
    "0.70,6,44\n"
)

# cured patients over antifungal doses; plateau-shaped response
FLUTRIMAZOLE_CSV = (
    "dose,events,trials\n"
    "0,12,33\n"
    "1,22,28\n"
    "2,22,32\n"
    "4,20,31\n"
)

# seed germination plates, six/five/five replicates per extract dilution
_ORO_DOSES = [1.0] * 6 + [0.04] * 5 + [0.002] * 5
_ORO_GERM = [2, 9, 5, 16, 2, 0, 17, 43, 79, 50, 9, 11, 47, 90, 46, 9]
_ORO_UNGERM = [43, 51, 44, 71, 24, 7, 19, 56, 87, 55, 10, 13, 62, 104, 51, 11]
OROBANCHE_CSV = "dose,events,trials\n" + "\n".join(
    f"{d},{g},{g + u}" for d, g, u in zip(_ORO_DOSES, _ORO_GERM, _ORO_UNGERM)
) + "\n"


@pytest.fixture(scope="session")
def acrylamide() -> DoseResponseTable:
    return parse_table(ACRYLAMIDE_CSV)


@pytest.fixture(scope="session")
def flutrimazole() -> DoseResponseTable:
    return parse_table(FLUTRIMAZOLE_CSV)


@pytest.fixture(scope="session")
def orobanche() -> DoseResponseTable:
    return parse_table(OROBANCHE_CSV)


@pytest.fixture(scope="session", autouse=True)
def _warm_mvn_kernel():
    # compile the numba kernel (when active) outside any timed assertion
    from trendlab import MvnProblem, mvn_prob
    mvn_prob(MvnProblem(np.eye(2), 1.0))


def two_group_table(events=(10, 15), trials=(20, 20), doses=(0.0, 1.0)) -> DoseResponseTable:
    return DoseResponseTable(np.asarray(doses, float), np.asarray(events, float),
                             np.asarray(trials, float))
