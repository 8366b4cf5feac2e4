import pytest

from trunccmp.synthetic import SyntheticLayout, generate_synthetic

SMALL_LAYOUT = SyntheticLayout(
    n_players=8,
    innings_per_player=40,
    oppositions=("Australia", "England", "India", "Pakistan"),
    year_range=(2000, 2020),
    career_years=15,
)


@pytest.fixture(scope="session")
def small():
    """(dataset, truth, model) with 320 innings; shared, treat as read-only."""
    return generate_synthetic(SMALL_LAYOUT, seed=11)
