/** Wire types for the editing service JSON API. */

export interface ModelInfo {
  image_dim: number;
  /** [height, width] when the image is square, else [image_dim]. */
  image_shape: number[];
  target_dim: number;
  latent_dim: number;
  target_kind: "multiclass" | "multilabel";
  attribute_names: string[];
  editing_interval: [number, number];
  image_range: [number, number];
}

export interface EditResponse {
  image_out: number[];
  shape: number[];
  /** Soft targets the encoder produced for the input image. */
  y_hat: number[];
  /** Soft targets after the requested replacements. */
  y_hat_edited: number[];
}

/** One coordinate replacement: [attribute index, new value]. */
export type EditPair = [number, number];
