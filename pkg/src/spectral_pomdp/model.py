"""Discrete POMDP data model, belief filtering, simulation, conjugation.

Conventions used throughout the package: beliefs are row vectors, the
observation is emitted from the state being left, so one filtering step is
b' proportional to b @ diag(O^{ao}) @ T^a and the normalizer is the one-step
observation likelihood.
"""

import dataclasses
import json

import numpy as np

from spectral_pomdp import _kernels

_ATOL = 1e-12


@dataclasses.dataclass(frozen=True)
class DiscretePomdp:
    """Ground-truth or learned model.

    trans[a] is the row-stochastic transition matrix of action a. obs[a, o]
    is the diagonal of the observation matrix O^{ao} stored as a vector, so
    stacking over o gives a row-stochastic emission table per action.
    reward is an optional r(state, action) table.
    """

    actions: tuple
    observations: tuple
    trans: np.ndarray
    obs: np.ndarray
    init: np.ndarray
    reward: np.ndarray = None
    discount: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "trans", np.asarray(self.trans, float))
        object.__setattr__(self, "obs", np.asarray(self.obs, float))
        object.__setattr__(self, "init", np.asarray(self.init, float))
        if self.reward is not None:
            object.__setattr__(self, "reward", np.asarray(self.reward, float))
        A, O = len(self.actions), len(self.observations)
        S = self.trans.shape[1] if self.trans.ndim == 3 else 0
        if self.trans.shape != (A, S, S) or S == 0:
            raise ValueError("transition tensor must be (actions, S, S)")
        if self.obs.shape != (A, O, S):
            raise ValueError("observation diagonals must be (actions, obs, S)")
        if np.any(self.trans < 0) or np.any(self.obs < 0):
            raise ValueError("negative probability entry")
        if np.max(np.abs(self.trans.sum(axis=2) - 1.0)) > _ATOL:
            raise ValueError("transition rows must sum to 1")
        if np.max(np.abs(self.obs.sum(axis=1) - 1.0)) > _ATOL:
            raise ValueError("observation diagonals must stack to row sums 1")
        if self.init.shape != (S,) or np.any(self.init < 0) \
                or abs(self.init.sum() - 1.0) > _ATOL:
            raise ValueError("initial distribution must be a probability vector")
        if self.reward is not None and self.reward.shape != (S, A):
            raise ValueError("reward table must be (state, action)")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")

    @property
    def num_states(self):
        return self.trans.shape[1]

    @property
    def num_actions(self):
        return len(self.actions)

    @property
    def num_obs(self):
        return len(self.observations)

    def emission(self, a):
        """Per-state observation distribution of action a, shape (S, O)."""
        return self.obs[a].T

    def to_json(self):
        return json.dumps(
            {
                "actions": list(self.actions),
                "observations": list(self.observations),
                "trans": self.trans.tolist(),
                "obs": self.obs.tolist(),
                "init": self.init.tolist(),
                "reward": None if self.reward is None else self.reward.tolist(),
                "discount": self.discount,
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            actions=tuple(d["actions"]),
            observations=tuple(d["observations"]),
            trans=np.array(d["trans"]),
            obs=np.array(d["obs"]),
            init=np.array(d["init"]),
            reward=None if d["reward"] is None else np.array(d["reward"]),
            discount=d["discount"],
        )


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Action-observation record of a simulation. Latent states stay hidden."""

    actions: np.ndarray
    observations: np.ndarray
    seed: int
    action_labels: tuple = None
    observation_labels: tuple = None

    def __len__(self):
        return len(self.actions)

    def steps(self):
        """Iterate over (action label, observation label) pairs."""
        for a, o in zip(self.actions, self.observations):
            yield self.action_labels[a], self.observation_labels[o]


def belief_update(model, b, a, o):
    """One Bayes filter step. Returns (posterior, normalizer).

    The normalizer is the one-step observation likelihood; a zero likelihood
    (impossible observation) is signalled as (None, 0.0).
    """
    w = (b * model.obs[a, o]) @ model.trans[a]
    lik = w.sum()
    if lik <= 0.0:
        return None, 0.0
    return w / lik, lik


def stationary_distribution(model, policy=None):
    """Stationary distribution of the policy-averaged chain.

    Raises on a reducible or periodic averaged chain (detected by a second
    eigenvalue on the unit circle).
    """
    if policy is None:
        policy = np.full(model.num_actions, 1.0 / model.num_actions)
    tbar = np.tensordot(policy, model.trans, axes=1)
    vals, vecs = np.linalg.eig(tbar.T)
    on_circle = np.sum(np.abs(vals) > 1.0 - 1e-10)
    if on_circle != 1:
        raise ValueError(
            "averaged chain is not ergodic (%d eigenvalues on the unit circle)"
            % on_circle
        )
    i = np.argmin(np.abs(vals - 1.0))
    b = np.real(vecs[:, i])
    b = b / b.sum()
    if np.abs(b @ tbar - b).sum() > 1e-12:
        raise ValueError("stationary fixed point did not converge")
    return b


def simulate(model, policy, n_steps, seed):
    """Sample a trajectory of n_steps under a memoryless policy."""
    policy = np.asarray(policy, float)
    if policy.shape != (model.num_actions,) or np.any(policy < 0) \
            or abs(policy.sum() - 1.0) > 1e-9:
        raise ValueError("policy must be a distribution over actions")
    tc = np.ascontiguousarray(np.cumsum(model.trans, axis=2))
    oc = np.ascontiguousarray(np.cumsum(np.swapaxes(model.obs, 1, 2), axis=2))
    pc = np.cumsum(policy)
    ic = np.cumsum(model.init)
    acts, obs, _states = _kernels.simulate_steps(tc, oc, pc, ic, n_steps, seed)
    return Trajectory(
        actions=acts,
        observations=obs,
        seed=seed,
        action_labels=model.actions,
        observation_labels=model.observations,
    )


def conjugate(model, p):
    """Similarity-transform the model by a nonsingular matrix p.

    Returns raw transformed matrices together with a validity report saying
    whether they still form a proper POMDP: trans' = P T P^-1 per action,
    obs' = P O^{ao} P^-1 per pair (a full matrix; validity requires it to be
    diagonal and nonnegative), init' = b0 P^-1.
    """
    p = np.asarray(p, float)
    cond = np.linalg.cond(p)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError("condition number %.3g: transform is singular" % cond)
    pinv = np.linalg.inv(p)
    A, O, S = model.obs.shape
    trans_p = np.einsum("ij,ajk,kl->ail", p, model.trans, pinv)
    # middle factor of the observation conjugation is diag(obs[a, o])
    obs_p = np.einsum("ij,aoj,jk->aoik", p, model.obs, pinv)
    init_p = model.init @ pinv
    issues = []
    if np.min(trans_p) < -1e-9:
        issues.append("negative transition entry %.3g" % np.min(trans_p))
    if np.max(np.abs(trans_p.sum(axis=2) - 1.0)) > 1e-9:
        issues.append("transition rows no longer stochastic")
    offdiag = obs_p * (1.0 - np.eye(S))
    if np.max(np.abs(offdiag)) > 1e-9:
        issues.append("observation matrices are no longer diagonal")
    diags = np.einsum("aoii->aoi", obs_p)
    if np.min(diags) < -1e-9:
        issues.append("negative observation entry %.3g" % np.min(diags))
    if np.max(np.abs(diags.sum(axis=1) - 1.0)) > 1e-9:
        issues.append("observation diagonals no longer stack to 1")
    if np.min(init_p) < -1e-9 or abs(init_p.sum() - 1.0) > 1e-9:
        issues.append("initial vector is no longer a distribution")
    return {
        "trans": trans_p,
        "obs": obs_p,
        "init": init_p,
        "valid": not issues,
        "issues": issues,
        "cond": cond,
    }


def conjugate_to_pomdp(model, p):
    """conjugate() then conversion back to a DiscretePomdp; raises if invalid."""
    out = conjugate(model, p)
    if not out["valid"]:
        raise ValueError("transform left the POMDP class: " + "; ".join(out["issues"]))
    # validity leaves at most 1e-9 rounding; clip and renormalize
    trans = np.clip(out["trans"], 0.0, None)
    trans /= trans.sum(axis=2, keepdims=True)
    diags = np.clip(np.einsum("aoii->aoi", out["obs"]), 0.0, None)
    diags /= diags.sum(axis=1, keepdims=True)
    init = np.clip(out["init"], 0.0, None)
    return DiscretePomdp(
        actions=model.actions,
        observations=model.observations,
        trans=trans,
        obs=diags,
        init=init / init.sum(),
        reward=model.reward,
        discount=model.discount,
    )
