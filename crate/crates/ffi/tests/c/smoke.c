#include <stdio.h>
#include <string.h>
#include "rnuclei.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    RnStatus s_ = (call);                                                  \
    if (s_ != RN_STATUS_OK) {                                              \
      fprintf(stderr, "%s -> %d: %s\n", #call, s_, rn_last_error_message()); \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  RnModel *model = NULL;
  RnConfiguration *config = NULL;
  RnDomain *domain = NULL;
  double lo[3] = {0, 0, 0}, hi[3] = {4, 4, 4};
  CHECK(rn_model_gaussian(0.25, &model));
  CHECK(rn_model_sample(model, lo, hi, 3.0, 11, &config));
  CHECK(rn_domain_aligned_cube(4, &domain));
  RnEnergy e;
  CHECK(rn_trial_energy(config, domain, 0.5, 1.0, &e));
  if (rn_model_gaussian(-1.0, &model) != RN_STATUS_NUMERICAL || strlen(rn_last_error_message()) == 0) {
    return 2;
  }
  printf("nuclei=%zu total=%.6f version=%s\n", rn_configuration_len(config), e.total, rn_version());
  rn_configuration_free(config);
  rn_domain_free(domain);
  rn_model_free(model);
  return 0;
}
