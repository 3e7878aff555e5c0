from .activation import ActivationKind, Identity, LeakyReLU, ReLU, Sigmoid, Step
from .backprop import GradientBundle, backward, fd_gradient, gradcheck
from .conv import ConvLayer, PoolLayer
from .errors import (ConfigError, DivergenceError, DomainError, GradcheckError, GradforgeError, LabelError, ParseError,
                     ShapeError, UnsupportedDerivativeError)
from .loss import LossKind, Quadratic, SoftmaxLogLoss
from .metrics import ConfusionMatrix, evaluate, summarize, top_k_error
from .network import DenseLayer, NetworkSpec, forward, init_params, load_model, save_model
from .optimize import TrainConfig, TrainReport, sgd_step, train

__version__ = "1.0.0"
