"""Speech emotion recognition toolkit: IS09 and MFCC features, logistic
regression, RBF SVM and LSTM classifiers, frozen-trunk transfer learning
and multi-task emotion + language training."""

__version__ = "0.1.0"
