"""scikit-learn compatible wrappers around the functional core.

``STPNClassifier`` trains one stream from video-level labels; ``TemporalLocalizer``
combines an RGB and a FLOW classifier into a detector. Inputs are lists of
per-video (T, m) feature matrices since videos differ in length.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import ShapeError, check_feature_list, check_label_matrix
from .data import sample_segments
from .localize import LocalizeConfig, detect
from .localize import tcam as _tcam
from .model import ModelParams, attention_forward, forward
from .train import Hyperparams, train_arrays


class STPNClassifier(ClassifierMixin, BaseEstimator):
    """Attention-pooled multi-label video classifier for one feature stream.

    Parameters
    ----------
    hidden : int
        Width of the attention module's hidden layer.
    beta : float
        Weight of the attention sparsity term.
    lr, epochs, t_out, beta1, beta2, eps
        Adam and sampling settings; ``t_out`` segments are sampled per video.
    random_state : int
        Seeds initialization, shuffling and segment perturbation.
    """

    def __init__(self, hidden=256, beta=0.1, lr=1e-4, epochs=100, t_out=400,
                 beta1=0.9, beta2=0.999, eps=1e-8, random_state=0):
        self.hidden = hidden
        self.beta = beta
        self.lr = lr
        self.epochs = epochs
        self.t_out = t_out
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.random_state = random_state

    def _hyper(self) -> Hyperparams:
        return Hyperparams(beta=self.beta, lr=self.lr, T_out=self.t_out,
                           epochs=self.epochs, hidden=self.hidden, beta1=self.beta1,
                           beta2=self.beta2, eps=self.eps, seed=int(self.random_state))

    def fit(self, X, y):
        X = check_feature_list(X)
        Y = check_label_matrix(y, len(X))
        self.params_, self.history_ = train_arrays(X, Y, self._hyper())
        self.n_features_in_ = X[0].shape[1]
        self.n_classes_ = Y.shape[1]
        self.classes_ = np.arange(self.n_classes_)
        return self

    @classmethod
    def from_params(cls, params: ModelParams, **kwargs) -> "STPNClassifier":
        est = cls(hidden=params.h, **kwargs)
        est.params_ = params
        est.history_ = []
        est.n_features_in_ = params.m
        est.n_classes_ = params.C
        est.classes_ = np.arange(params.C)
        return est

    def _prepare(self, X):
        check_is_fitted(self, "params_")
        X = check_feature_list(X, self.n_features_in_)
        return [sample_segments(x, self.t_out, "deterministic") for x in X]

    def decision_function(self, X):
        """Pre-sigmoid class scores, shape (n_videos, C)."""
        return np.stack([forward(self.params_, x).s for x in self._prepare(X)])

    def predict_proba(self, X):
        return np.stack([forward(self.params_, x).p for x in self._prepare(X)])

    def predict(self, X):
        """Multi-label indicator of classes with probability >= 0.5."""
        return (self.predict_proba(X) >= 0.5).astype(int)

    def transform(self, X):
        """Attention-pooled video representations, shape (n_videos, m)."""
        return np.stack([forward(self.params_, x).xbar for x in self._prepare(X)])

    def attention(self, X) -> list:
        return [attention_forward(self.params_, x)[0] for x in self._prepare(X)]

    def tcam(self, X) -> list:
        return [_tcam(self.params_, x).values for x in self._prepare(X)]


class TemporalLocalizer(BaseEstimator):
    """Two-stream weakly supervised action detector.

    ``fit`` clones ``rgb`` and ``flow`` and trains each on its own stream.
    ``predict`` returns one list of :class:`Detection` per video.
    """

    def __init__(self, rgb=None, flow=None, alpha=0.5, class_reject_p=0.1, tau=0.05,
                 nms_iou=0.5, rho=4, t_out=400):
        self.rgb = rgb
        self.flow = flow
        self.alpha = alpha
        self.class_reject_p = class_reject_p
        self.tau = tau
        self.nms_iou = nms_iou
        self.rho = rho
        self.t_out = t_out

    def config(self) -> LocalizeConfig:
        return LocalizeConfig(alpha=self.alpha, class_reject_p=self.class_reject_p,
                              tau=self.tau, nms_iou=self.nms_iou, rho=self.rho,
                              T_out=self.t_out)

    def fit(self, X_rgb, X_flow, y):
        if len(X_rgb) != len(X_flow):
            raise ShapeError("RGB and FLOW inputs hold different numbers of videos")
        self.config()
        base = STPNClassifier()
        self.rgb_ = clone(self.rgb if self.rgb is not None else base).fit(X_rgb, y)
        self.flow_ = clone(self.flow if self.flow is not None else base).fit(X_flow, y)
        return self

    @classmethod
    def from_params(cls, rgb_params: ModelParams, flow_params: ModelParams, **kwargs):
        est = cls(**kwargs)
        est.rgb_ = STPNClassifier.from_params(rgb_params)
        est.flow_ = STPNClassifier.from_params(flow_params)
        return est

    def predict_proba(self, X_rgb, X_flow):
        """Fused video-level class probabilities."""
        check_is_fitted(self, ["rgb_", "flow_"])
        return (self.alpha * self.rgb_.predict_proba(X_rgb)
                + (1.0 - self.alpha) * self.flow_.predict_proba(X_flow))

    def predict(self, X_rgb, X_flow, durations, video_ids=None):
        check_is_fitted(self, ["rgb_", "flow_"])
        cfg = self.config()
        X_rgb = check_feature_list(X_rgb, self.rgb_.n_features_in_, "X_rgb")
        X_flow = check_feature_list(X_flow, self.flow_.n_features_in_, "X_flow")
        if not len(X_rgb) == len(X_flow) == len(durations):
            raise ShapeError("inputs hold different numbers of videos")
        if video_ids is None:
            video_ids = [str(i) for i in range(len(X_rgb))]
        out = []
        for vid, xr, xf, dur in zip(video_ids, X_rgb, X_flow, durations):
            out.append(detect(self.rgb_.params_, self.flow_.params_, vid, float(dur),
                               {"rgb": xr, "flow": xf}, cfg))
        return out

