"""scikit-learn style wrappers around the training loop and the weight binarizer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bitkernel.export import export_model, packed_infer
from .checkpoint import create_state
from .config import RunConfig
from .errors import DimensionError
from .libra import libra_pb
from .nn.train import predict_logits, softmax, train_epoch
from .tensor import DTYPE


class BinaryNetClassifier(ClassifierMixin, BaseEstimator):
    """Binary network classifier trained with the configured ablation arm.

    Parameters
    ----------
    architecture : str
        One of ``mlp``, ``lenet``, ``vgg_small``, ``resnet20``.
    arm : str
        Ablation arm, e.g. ``irnet`` or ``vanilla_sign``.
    input_shape : tuple, optional
        Per-sample shape. Inferred from ``X`` when it has more than 2 dims,
        otherwise ``(n_features,)``.
    epochs, batch_size, lr, momentum, weight_decay, seed, t_min, t_max
        Training settings, as in :class:`~irnet.config.RunConfig`.
    """

    def __init__(self, architecture="mlp", arm="irnet", input_shape=None, epochs=5, batch_size=64,
                 lr=0.05, momentum=0.9, weight_decay=1e-4, seed=0, t_min=0.1, t_max=10.0):
        self.architecture = architecture
        self.arm = arm
        self.input_shape = input_shape
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.seed = seed
        self.t_min = t_min
        self.t_max = t_max

    def _shape(self, X):
        if self.input_shape is not None:
            return tuple(self.input_shape)
        return tuple(X.shape[1:])

    def _reshape(self, X):
        X = check_array(X, allow_nd=True, dtype=DTYPE)
        shape = self.input_shape_
        if int(np.prod(X.shape[1:])) != int(np.prod(shape)):
            raise DimensionError(f"X has {X.shape[1:]} features per sample; model expects {shape}")
        return X.reshape((len(X),) + shape)

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, dtype=DTYPE)
        self.input_shape_ = self._shape(X)
        X = X.reshape((len(X),) + self.input_shape_)
        self.label_encoder_ = LabelEncoder().fit(y)
        self.classes_ = self.label_encoder_.classes_
        codes = self.label_encoder_.transform(y)
        config = RunConfig(architecture=self.architecture, arm=self.arm, epochs=self.epochs,
                           batch_size=self.batch_size, lr=self.lr, momentum=self.momentum,
                           weight_decay=self.weight_decay, seed=self.seed, t_min=self.t_min,
                           t_max=self.t_max, augment="false")
        self.state_ = create_state(config, self.input_shape_, max(len(self.classes_), 2))
        self.history_ = [train_epoch(self.state_, X, codes) for _ in range(self.epochs)]
        self.n_features_in_ = int(np.prod(self.input_shape_))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "state_")
        return predict_logits(self.state_.model, self._reshape(X))

    def predict_proba(self, X):
        check_is_fitted(self, "state_")
        return softmax(self.decision_function(X))[:, : len(self.classes_)]

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def export(self, float_dtype=np.float64):
        """The packed deployment form of the fitted network."""
        check_is_fitted(self, "state_")
        return export_model(self.state_.model, float_dtype, metadata=dict(self.state_.meta))

    def predict_packed(self, X):
        """Labels computed through the XNOR-popcount inference path."""
        check_is_fitted(self, "state_")
        logits = packed_infer(self.export(), self._reshape(X))
        return self.classes_[np.argmax(logits[:, : len(self.classes_)], axis=1)]


class LibraBinarizer(TransformerMixin, BaseEstimator):
    """Row-wise Libra binarization: each row is balanced, standardized and mapped to ``sign * 2**s``.

    ``transform`` returns the reconstruction; ``shifts_`` holds the per-row
    shift of the last transformed matrix.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=DTYPE)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=DTYPE)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"X has {X.shape[1]} features, fitted with {self.n_features_in_}")
        b = libra_pb(X)
        self.shifts_ = b.shift
        return b.reconstruct()
