"""Price and capacity competition between two storage firms in a balancing market."""

__version__ = "0.1.0"

from .dispatch import (  # noqa: E402
    AllocationStep,
    PriceProfile,
    StorageState,
    StorageUnit,
    leak_and_allocate,
    lp_oracle_check,
    simulate_horizon,
)
from .imbalance import Deterministic, ExternalSequence, HalfNormal, IIDNormal, sample_sequences  # noqa: E402
from .throughput import (  # noqa: E402
    ThroughputMoments,
    closed_form_deterministic,
    closed_form_half_normal,
    estimate_moments_mc,
)
from .pricing import (  # noqa: E402
    PricingEquilibrium,
    expected_prices,
    sample_price,
    solve_market,
    solve_pricing,
    strategy_cdf,
    verify_best_response,
)
from .capacity import (  # noqa: E402
    CapacityGameConfig,
    deterministic_equilibrium_set,
    net_payoff,
    payoff_pair,
    solve_capacity_equilibria,
)
