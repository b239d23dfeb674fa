"""From-scratch vision-transformer toolkit for 4-class satellite-image
classification: autodiff tensor core, ViT and logistic-regression models,
seeded augmentation, geolocation features, t-SNE, one-vs-rest metrics, and a
train/eval harness with CLI."""

__version__ = "0.1.0"
