#include <stdlib.h>

#include "tfhe/tfhe.h"

static void *checked_calloc(size_t n, size_t size) {
    void *p = calloc(n, size);
    if (!p) {
        abort();
    }
    return p;
}

TFheGateBootstrappingParameterSet *new_default_gate_bootstrapping_parameters(int minimum_lambda) {
    TFheGateBootstrappingParameterSet *p = checked_calloc(1, sizeof *p);
    p->minimum_lambda = minimum_lambda;
    return p;
}

void delete_gate_bootstrapping_parameters(TFheGateBootstrappingParameterSet *params) { free(params); }

void tfhe_random_generator_setSeed(uint32_t *values, int size) {
    (void)values;
    (void)size;
}

TFheGateBootstrappingSecretKeySet *new_random_gate_bootstrapping_secret_keyset(
    const TFheGateBootstrappingParameterSet *params) {
    TFheGateBootstrappingSecretKeySet *k = checked_calloc(1, sizeof *k);
    k->params = params;
    k->cloud.params = params;
    return k;
}

void delete_gate_bootstrapping_secret_keyset(TFheGateBootstrappingSecretKeySet *keyset) { free(keyset); }

LweSample *new_gate_bootstrapping_ciphertext(const TFheGateBootstrappingParameterSet *params) {
    return new_gate_bootstrapping_ciphertext_array(1, params);
}

LweSample *new_gate_bootstrapping_ciphertext_array(int nbelems, const TFheGateBootstrappingParameterSet *params) {
    (void)params;
    return checked_calloc(nbelems > 0 ? (size_t)nbelems : 1, sizeof(LweSample));
}

void delete_gate_bootstrapping_ciphertext(LweSample *sample) { free(sample); }

void delete_gate_bootstrapping_ciphertext_array(int nbelems, LweSample *samples) {
    (void)nbelems;
    free(samples);
}

static void set(LweSample *r, int bit) {
    r->message = bit & 1;
    r->initialized = 1;
}

void bootsSymEncrypt(LweSample *result, int message, const TFheGateBootstrappingSecretKeySet *key) {
    (void)key;
    set(result, message);
}

int bootsSymDecrypt(const LweSample *sample, const TFheGateBootstrappingSecretKeySet *key) {
    (void)key;
    return sample->message & 1;
}

void bootsCONSTANT(LweSample *result, int value, const TFheGateBootstrappingCloudKeySet *bk) {
    (void)bk;
    set(result, value != 0);
}

void bootsNOT(LweSample *result, const LweSample *ca, const TFheGateBootstrappingCloudKeySet *bk) {
    (void)bk;
    set(result, !ca->message);
}

void bootsCOPY(LweSample *result, const LweSample *ca, const TFheGateBootstrappingCloudKeySet *bk) {
    (void)bk;
    set(result, ca->message);
}

void bootsAND(LweSample *result, const LweSample *ca, const LweSample *cb, const TFheGateBootstrappingCloudKeySet *bk) {
    (void)bk;
    set(result, ca->message & cb->message);
}

void bootsOR(LweSample *result, const LweSample *ca, const LweSample *cb, const TFheGateBootstrappingCloudKeySet *bk) {
    (void)bk;
    set(result, ca->message | cb->message);
}

void bootsXOR(LweSample *result, const LweSample *ca, const LweSample *cb, const TFheGateBootstrappingCloudKeySet *bk) {
    (void)bk;
    set(result, ca->message ^ cb->message);
}

void bootsMUX(LweSample *result, const LweSample *a, const LweSample *b, const LweSample *c,
              const TFheGateBootstrappingCloudKeySet *bk) {
    (void)bk;
    set(result, a->message ? b->message : c->message);
}
