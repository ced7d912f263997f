"""Containers for posterior draws produced by either fitting backend."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownGroupError, ValidationError
from .model import MixingData, Priors


@dataclass
class GroupDraws:
    """Raw per-group draws in the original source order."""

    p_model: np.ndarray      # (n_draws, K_original), rows on the simplex
    sigma: np.ndarray        # (n_draws, J), strictly positive
    deviance: np.ndarray     # (n_draws,)
    chain: np.ndarray        # (n_draws,) int chain id (all zero for FFVB)

    def __post_init__(self):
        self.p_model = np.asarray(self.p_model, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.deviance = np.asarray(self.deviance, dtype=float)
        self.chain = np.asarray(self.chain, dtype=int)
        n = self.p_model.shape[0]
        if not (self.sigma.shape[0] == n and self.deviance.shape[0] == n and self.chain.shape[0] == n):
            raise ValidationError("draw arrays disagree on the number of draws")

    @property
    def n_draws(self) -> int:
        return self.p_model.shape[0]


@dataclass
class FitResult:
    """A fitted mixing model: per-group posterior draws plus everything
    needed to reproduce and post-process them.

    ``source_names`` reflect the current (possibly combined) source columns;
    ``combine_map`` maps each current column to the original column indices
    it sums over, so combination never loses the raw draws.
    """

    data: MixingData
    priors_by_group: dict
    backend: str                      # "mcmc" | "ffvb"
    draws: dict                       # group label -> GroupDraws
    source_names: list
    combine_map: list = None
    control: dict = field(default_factory=dict)
    seed: int = None

    def __post_init__(self):
        if self.backend not in ("mcmc", "ffvb"):
            raise ValidationError(f"unknown backend tag {self.backend!r}")
        if self.combine_map is None:
            self.combine_map = [[k] for k in range(len(self.data.source_names))]
        self.source_names = list(self.source_names)
        if len(self.combine_map) != len(self.source_names):
            raise ValidationError("combine_map must match source_names")

    @property
    def group_names(self) -> tuple:
        return tuple(self.draws)

    @property
    def n_sources(self) -> int:
        return len(self.source_names)

    def _group(self, group=None) -> str:
        if group is None:
            if len(self.draws) != 1:
                raise UnknownGroupError(
                    f"fit holds groups {list(self.draws)}; specify one"
                )
            return next(iter(self.draws))
        group = str(group)
        if group not in self.draws:
            raise UnknownGroupError(
                f"unknown group {group!r}; available: {list(self.draws)}"
            )
        return group

    def group_draws(self, group=None) -> GroupDraws:
        return self.draws[self._group(group)]

    def p_draws(self, group=None) -> np.ndarray:
        """Proportion draws in the current (possibly combined) source space."""
        raw = self.group_draws(group).p_model
        cols = [raw[:, idx].sum(axis=1) for idx in self.combine_map]
        return np.column_stack(cols)

    def sigma_draws(self, group=None) -> np.ndarray:
        return self.group_draws(group).sigma

    def deviance_draws(self, group=None) -> np.ndarray:
        return self.group_draws(group).deviance

    def chain_ids(self, group=None) -> np.ndarray:
        return self.group_draws(group).chain

    def priors_for(self, group=None) -> Priors:
        return self.priors_by_group[self._group(group)]

    def monitored_names(self) -> list:
        """Row labels in summary order: deviance, sources, residual scales."""
        return (
            ["deviance"]
            + list(self.source_names)
            + [f"sd[{t}]" for t in self.data.tracer_names]
        )

    def monitored_draws(self, group=None) -> np.ndarray:
        """Draw matrix aligned with :meth:`monitored_names`, (n_draws, 1+K+J)."""
        g = self._group(group)
        return np.column_stack(
            [self.deviance_draws(g)[:, None], self.p_draws(g), self.sigma_draws(g)]
        )
