"""Dense vector primitives, cosine geometry and the clustering temperature."""
