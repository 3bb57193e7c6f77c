"""Graph-attention deep Q-learning over the fog-region graph."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .nn import Adam, Architecture, QModel, model_backward, model_forward
from .validation import check_state


@dataclass(frozen=True)
class Transition:
    state: tuple  # (X, A)
    actions: np.ndarray
    reward: float
    next_state: tuple
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions."""

    def __init__(self, capacity=10_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def add(self, transition: Transition):
        self._items.append(transition)

    def sample(self, batch_size, rng):
        """Uniform sample without replacement."""
        if batch_size > len(self._items):
            raise ValueError(
                f"cannot sample {batch_size} transitions from a buffer of {len(self._items)}"
            )
        picks = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in picks]


def select_actions(Q, epsilon, rng):
    """Per-node epsilon-greedy choice; greedy ties go to the lowest action index."""
    Q = np.asarray(Q)
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    greedy = np.argmax(Q, axis=1)
    if epsilon == 0.0:
        return greedy
    explore = rng.random(Q.shape[0]) < epsilon
    random_actions = rng.integers(0, Q.shape[1], size=Q.shape[0])
    return np.where(explore, random_actions, greedy)


def _stack(states):
    X = np.vstack([s[0] for s in states])
    A = block_diag(*[s[1] for s in states])
    return X, A


def td_targets(batch, target_model: QModel, discount, reward_scale=1.0):
    """``(B, N)`` targets: reward plus discounted next-state max, or reward alone if done.

    Rewards are multiplied by ``reward_scale`` first.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    n = batch[0].actions.shape[0]
    rewards = reward_scale * np.array([t.reward for t in batch], dtype=float)
    done = np.array([t.done for t in batch], dtype=bool)
    q_next = model_forward(target_model, *_stack([t.next_state for t in batch]))
    best_next = q_next.max(axis=1).reshape(len(batch), n)
    return rewards[:, None] + np.where(done, 0.0, discount)[:, None] * best_next


def batch_loss_and_grads(model: QModel, batch, targets):
    """Mean over the batch of the per-node mean squared TD error, and its gradients."""
    B = len(batch)
    n = batch[0].actions.shape[0]
    X, A = _stack([t.state for t in batch])
    q = model_forward(model, X, A)
    acts = np.concatenate([t.actions for t in batch]).astype(int)
    rows = np.arange(B * n)
    err = q[rows, acts] - targets.reshape(-1)
    loss = float(np.sum(err ** 2) / (B * n))
    upstream = np.zeros_like(q)
    upstream[rows, acts] = 2.0 * err / (B * n)
    return loss, model_backward(model, X, A, upstream)


def train_step(model: QModel, target_model: QModel, buffer: ReplayBuffer, optimizer: Adam,
               batch_size, discount, rng, reward_scale=1.0):
    batch = buffer.sample(batch_size, rng)
    y = td_targets(batch, target_model, discount, reward_scale)
    loss, grads = batch_loss_and_grads(model, batch, y)
    optimizer.step(model.params, grads)
    return loss


def update_target(model: QModel, target_model: QModel, step, every):
    """Hard copy of the online weights whenever ``step`` is a multiple of ``every``."""
    if every > 0 and step % every == 0:
        target_model.load_from(model)
    return target_model


class GAQAgent(BaseEstimator):
    """Deep Q-learning agent whose Q-network attends over the fog-region graph.

    ``fit(env)`` runs warm-up then training episodes on a
    :class:`~fogroute.env.ReroutingEnv`; ``predict(X, A)`` returns the
    greedy road index for every fog region.
    """

    def __init__(self, discount=0.99, learning_rate=1e-4, batch_size=32, target_update_every=100,
                 epsilon_start=1.0, epsilon_end=0.05, epsilon_decay_episodes=300,
                 buffer_capacity=10_000, warmup_episodes=200, train_every=1,
                 reward_scale=1.0, random_state=None):
        self.discount = discount
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.target_update_every = target_update_every
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay_episodes = epsilon_decay_episodes
        self.buffer_capacity = buffer_capacity
        self.warmup_episodes = warmup_episodes
        self.train_every = train_every
        self.reward_scale = reward_scale
        self.random_state = random_state

    def _check_params(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def initialize(self, arch: Architecture | None = None):
        """Fresh model, target copy, optimizer and buffer."""
        self._check_params()
        seed = np.random.SeedSequence(self.random_state)
        init_seed, rng_seed = seed.spawn(2)
        self.model_ = QModel(arch, rng=np.random.default_rng(init_seed))
        self.target_ = self.model_.copy()
        self.optimizer_ = Adam(self.learning_rate)
        self.buffer_ = ReplayBuffer(self.buffer_capacity)
        self.rng_ = np.random.default_rng(rng_seed)
        self.train_steps_ = 0
        self.episodes_done_ = 0
        self.losses_ = []
        return self

    def set_model(self, model: QModel, optimizer: Adam | None = None):
        if not hasattr(self, "model_"):
            self.initialize(model.arch)
        self.model_ = model
        self.target_ = model.copy()
        if optimizer is not None:
            self.optimizer_ = optimizer
        return self

    def epsilon_at(self, train_episode):
        """Linear anneal over the first ``epsilon_decay_episodes`` post-warm-up episodes."""
        if train_episode >= self.epsilon_decay_episodes:
            return self.epsilon_end
        frac = train_episode / self.epsilon_decay_episodes
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def decision_function(self, X, A):
        check_is_fitted(self, "model_")
        X, A = check_state(X, A)
        return model_forward(self.model_, X, A)

    def predict(self, X, A):
        return select_actions(self.decision_function(X, A), 0.0, None)

    def act(self, X, A, epsilon):
        return select_actions(self.decision_function(X, A), epsilon, self.rng_)

    def random_actions(self, n_nodes):
        return self.rng_.integers(0, self.model_.arch.n_actions, size=n_nodes)

    def remember(self, transition: Transition):
        self.buffer_.add(transition)

    def learn(self):
        """One gradient step from replay, then a target sync when due. Returns the loss."""
        loss = train_step(self.model_, self.target_, self.buffer_, self.optimizer_,
                          self.batch_size, self.discount, self.rng_, self.reward_scale)
        self.train_steps_ += 1
        update_target(self.model_, self.target_, self.train_steps_, self.target_update_every)
        self.losses_.append(loss)
        return loss

    def fit(self, env, y=None, n_episodes=800, callback=None):
        """Warm-up with random actions, then epsilon-greedy training.

        ``callback(record)`` receives each :class:`~fogroute.env.EpisodeRecord`.
        """
        from .env import run_episode

        if not hasattr(self, "model_"):
            self.initialize()
        self.history_ = []
        for ep in range(n_episodes):
            if ep < self.warmup_episodes:
                mode, eps = "warmup", 1.0
            else:
                mode, eps = "train", self.epsilon_at(ep - self.warmup_episodes)
            rec = run_episode(env, self, mode=mode, epsilon=eps, episode=ep)
            self.episodes_done_ += 1
            self.history_.append(rec)
            if callback is not None:
                callback(rec)
        return self
