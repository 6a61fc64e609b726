#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "balshap.h"

#define CHECK(call)                                                         \
  do {                                                                      \
    BalshapStatus s_ = (call);                                              \
    if (s_ != BALSHAP_STATUS_OK) {                                          \
      const char *m_ = balshap_last_error_message();                        \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, m_ ? m_ : "?");     \
      return 1;                                                             \
    }                                                                       \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 2) {
    fprintf(stderr, "usage: smoke model.json\n");
    return 2;
  }
  enum { N = 40, D = 3 };
  double x[N * D];
  uint8_t y[N];
  for (int i = 0; i < N; i++) {
    x[i * D + 0] = (double)i / N;
    x[i * D + 1] = (double)(i % 7);
    x[i * D + 2] = -1.0;
    y[i] = i < 10;
  }
  BalshapDataset *ds = NULL;
  CHECK(balshap_dataset_from_arrays(x, y, N, D, &ds));

  BalshapModel *model = NULL;
  CHECK(balshap_model_load_json(argv[1], &model));

  BalshapDataset *bg = NULL;
  CHECK(balshap_compose_background(ds, 20, 0.5, 3, &bg));
  size_t n = 0, d = 0;
  CHECK(balshap_dataset_dims(bg, &n, &d));
  if (n != 20 || d != D) return 3;

  BalshapShap *shap = NULL;
  CHECK(balshap_explain(model, bg, ds, BALSHAP_METHOD_DEEP, BALSHAP_OUTPUT_PROBABILITY, 0, 1, &shap));
  double phi[N * D], fx[N], base = 0.0;
  CHECK(balshap_shap_copy_phi(shap, phi, N * D));
  CHECK(balshap_shap_copy_fx(shap, fx, N));
  CHECK(balshap_shap_base_value(shap, &base));
  double worst = 0.0;
  for (int i = 0; i < N; i++) {
    double sum = base;
    for (int j = 0; j < D; j++) sum += phi[i * D + j];
    double gap = fabs(sum - fx[i]);
    if (gap > worst) worst = gap;
  }
  if (worst > 1e-9) return 4;

  double auc = 0.0;
  CHECK(balshap_auc(fx, y, N, &auc));

  if (balshap_shap_copy_phi(shap, phi, 1) != BALSHAP_STATUS_DIMENSION_MISMATCH) return 5;
  if (balshap_last_error_message() == NULL) return 6;

  printf("ok auc=%.6f gap=%.3g\n", auc, worst);
  balshap_shap_free(shap);
  balshap_dataset_free(bg);
  balshap_model_free(model);
  balshap_dataset_free(ds);
  return 0;
}
