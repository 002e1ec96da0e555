"""scikit-learn wrapper around the Vision Transformer variants."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import ImageDataset
from .train import OptimizerConfig, train
from .vit import VisionTransformer, make_config

__all__ = ["HybKanViTClassifier"]


class HybKanViTClassifier(ClassifierMixin, BaseEstimator):
    """Image classifier backed by one ViT variant.

    ``X`` is either ``(n, C, H, W)`` or flat ``(n, C*H*W)``; flat input needs
    ``image_shape=(C, H, W)`` unless it is a single-channel square.
    """

    def __init__(self, variant="vit", size="toy", image_shape=None, patch_size=None, epochs=3, batch_size=32,
                 lr=2e-3, warmup_epochs=0.5, label_smoothing=0.0, weight_decay=0.05, precision=32,
                 random_state=0):
        self.variant = variant
        self.size = size
        self.image_shape = image_shape
        self.patch_size = patch_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.warmup_epochs = warmup_epochs
        self.label_smoothing = label_smoothing
        self.weight_decay = weight_decay
        self.precision = precision
        self.random_state = random_state

    def _dtype(self):
        return np.float64 if self.precision == 64 else np.float32

    def _as_images(self, X, shape=None):
        X = np.asarray(X, dtype=self._dtype())
        if X.ndim == 4:
            out = X
        elif X.ndim == 3:
            out = X[:, None]
        elif X.ndim == 2:
            if shape is None:
                side = math.isqrt(X.shape[1])
                if side * side != X.shape[1]:
                    raise ValueError(f"cannot infer a square image from {X.shape[1]} features; set image_shape")
                shape = (1, side, side)
            if int(np.prod(shape)) != X.shape[1]:
                raise ValueError(f"image_shape {tuple(shape)} does not match {X.shape[1]} features")
            out = X.reshape((X.shape[0], *shape))
        else:
            raise ValueError(f"expected 2-D, 3-D or 4-D input, got {X.ndim}-D")
        if out.shape[2] != out.shape[3]:
            raise ValueError(f"images must be square, got {out.shape[2]}x{out.shape[3]}")
        return out

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, dtype=self._dtype())
        self.label_encoder_ = LabelEncoder().fit(y)
        self.classes_ = self.label_encoder_.classes_
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        images = self._as_images(X, self.image_shape)
        c, h, _ = images.shape[1:]
        self.n_features_in_ = X.shape[1] if X.ndim == 2 else int(np.prod(X.shape[1:]))
        self.image_shape_ = images.shape[1:]
        overrides = dict(image_size=h, in_channels=c, num_classes=len(self.classes_), precision=self.precision)
        if self.patch_size is not None:
            overrides["patch_size"] = self.patch_size
        self.config_ = make_config(self.variant, self.size, **overrides)
        self.model_ = VisionTransformer(self.config_, seed=self.random_state)
        opt = OptimizerConfig(lr_base=self.lr, total_epochs=self.epochs, warmup_epochs=self.warmup_epochs,
                              batch_size=self.batch_size, label_smoothing=self.label_smoothing,
                              weight_decay=self.weight_decay)
        data = ImageDataset(images, self.label_encoder_.transform(y), len(self.classes_))
        self.history_ = train(self.model_, data, opt, seed=self.random_state).history
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, allow_nd=True, dtype=self._dtype())
        images = self._as_images(X, self.image_shape_)
        if images.shape[1:] != self.image_shape_:
            raise ValueError(f"expected images of shape {self.image_shape_}, got {images.shape[1:]}")
        self.model_.eval()
        return np.concatenate([self.model_.predict_proba(images[i:i + 256])
                               for i in range(0, len(images), 256)])

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
