"""Per-action rewards for the critique-and-routing controller.

Each controller action is scored on two binary components, routing and
verification, mixed with equal weight.  The Lagrangian-relaxed variant
subtracts a per-agent usage price ``xi_k`` whenever agent ``k`` is invoked.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

if TYPE_CHECKING:
    from .env import AgentProfile, Draft

ROUTE_WEIGHT = 0.5
VERIFY_WEIGHT = 0.5


class ContractError(RuntimeError):
    """Raised when a caller breaks an operation's precondition."""


class Verdict(enum.Enum):
    ACCEPT = "accept_true"
    REJECT = "reject_false"


@dataclass(frozen=True)
class ControllerAction:
    """Structured controller output: an optional verdict on the previous
    draft and an optional agent to route to next.

    ``route_to`` is ``None`` on accept and on the reject-and-stop action that
    is offered once the strongest agent has already answered.
    """

    verdict: Optional[Verdict]
    route_to: Optional[int]
    turn_issued: int

    @property
    def routes(self) -> bool:
        return self.route_to is not None

    @property
    def kind(self) -> str:
        if self.verdict is None:
            return "route"
        if self.verdict is Verdict.ACCEPT:
            return "accept"
        return "reject_route" if self.route_to is not None else "reject_stop"

    def validate(self) -> None:
        if self.turn_issued == 1:
            if self.verdict is not None or self.route_to is None:
                raise ContractError("turn-1 actions route and carry no verdict")
        else:
            if self.verdict is None:
                raise ContractError("actions after turn 1 must carry a verdict")
            if self.verdict is Verdict.ACCEPT and self.route_to is not None:
                raise ContractError("accept never routes")


@dataclass(frozen=True)
class RewardBreakdown:
    r_route: int
    r_verify: int
    penalty: float
    composite: float
    modified_composite: float


def routing_correct(action: ControllerAction, resulting_draft: Optional["Draft"]) -> int:
    """1 iff the action invoked an agent and that agent answered correctly."""
    if not action.routes:
        return 0
    if resulting_draft is None:
        raise ContractError("a routing action needs the routed agent's draft")
    return int(resulting_draft.correct)


def verification_correct(action: ControllerAction, prior_draft: Optional["Draft"]) -> int:
    if action.turn_issued == 1 or action.verdict is None:
        return 0
    if prior_draft is None:
        raise ContractError("verification after turn 1 needs the prior draft")
    if action.verdict is Verdict.ACCEPT:
        return int(prior_draft.correct)
    return int(not prior_draft.correct)


def composite_reward(r_route: int, r_verify: int) -> float:
    return ROUTE_WEIGHT * r_route + VERIFY_WEIGHT * r_verify


def modified_reward(
    r_route: int,
    r_verify: int,
    routed_agent: Optional[int],
    pool: Sequence["AgentProfile"],
) -> RewardBreakdown:
    """Composite reward with the usage price of the routed agent removed.

    The modified routing reward is ``r_route - 2 * xi_k`` for the invoked
    agent, so after the 0.5 mixing weight the mixed reward drops by exactly
    ``xi_k``.
    """
    composite = composite_reward(r_route, r_verify)
    xi = 0.0
    if routed_agent is not None:
        for agent in pool:
            if agent.agent_id == routed_agent:
                xi = agent.xi
                break
        else:
            raise ContractError(f"agent {routed_agent} is not in the pool")
        if xi < 0:
            raise ContractError("Lagrange multipliers must be nonnegative")
    route_mod = r_route - 2.0 * xi
    modified = ROUTE_WEIGHT * route_mod + VERIFY_WEIGHT * r_verify
    return RewardBreakdown(
        r_route=r_route,
        r_verify=r_verify,
        penalty=xi,
        composite=composite,
        modified_composite=modified,
    )


def score_action(
    action: ControllerAction,
    prior_draft: Optional["Draft"],
    resulting_draft: Optional["Draft"],
    pool: Sequence["AgentProfile"],
) -> RewardBreakdown:
    """Full reward breakdown for one executed action."""
    r_route = routing_correct(action, resulting_draft)
    r_verify = verification_correct(action, prior_draft)
    return modified_reward(r_route, r_verify, action.route_to, pool)
