#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <random>
#include <set>

#include "sealdb/cipher.hpp"

using namespace sealdb;

namespace {

Bytes counting_bytes(std::size_t n, std::uint8_t start = 0) {
    Bytes out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint8_t>(start + i);
    return out;
}

Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
    Bytes out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng() & 0xff);
    return out;
}

} // namespace

TEST_CASE("xor-stream matches the pinned regression vectors") {
    // Computed once with a scratch Python implementation of the keystream
    // (SHA-256(key || nonce || be64(block)) XOR plaintext) and frozen.
    XorStreamCipher cipher;
    CipherKey key = cipher.make_key(counting_bytes(16));
    Bytes nonce = counting_bytes(12);

    CHECK(hex_encode(cipher.encrypt(to_bytes("10000"), key, nonce).body) == "9e5f87bb4a");
    CHECK(hex_encode(cipher.encrypt(to_bytes("attack at dawn"), key, nonce).body) ==
          "ce1bc3ea19d5dda54df8fba23270");
    CHECK(hex_encode(cipher.encrypt(to_bytes("10000"), key, Bytes(12, 0x01)).body) ==
          "d8a4b22a51");

    DecryptionCounter counter;
    CipherEnvelope pinned{counting_bytes(12), hex_decode("9e5f87bb4a")};
    CHECK(to_string(cipher.decrypt(pinned, key, counter)) == "10000");
}

TEST_CASE("roundtrip holds for random messages, keys and nonces") {
    std::mt19937_64 rng(20240811);
    XorStreamCipher xs;
    AesGcmCipher gcm;
    DecryptionCounter counter;

    for (int i = 0; i < 1000; ++i) {
        Bytes message = random_bytes(rng, rng() % 64);
        Bytes nonce = random_bytes(rng, Cipher::kNonceBytes);
        CipherKey key = xs.make_key(random_bytes(rng, xs.key_bytes()));
        CHECK(xs.decrypt(xs.encrypt(message, key, nonce), key, counter) == message);
    }
    for (int i = 0; i < 200; ++i) {
        Bytes message = random_bytes(rng, rng() % 64);
        Bytes nonce = random_bytes(rng, Cipher::kNonceBytes);
        CipherKey key = gcm.make_key(random_bytes(rng, gcm.key_bytes()));
        CHECK(gcm.decrypt(gcm.encrypt(message, key, nonce), key, counter) == message);
    }
}

TEST_CASE("distinct nonces give distinct envelopes for equal plaintext") {
    XorStreamCipher cipher;
    CipherKey key = cipher.make_key(counting_bytes(16, 7));
    CipherEnvelope e1 = cipher.encrypt(to_bytes("10000"), key, counting_bytes(12, 1));
    CipherEnvelope e2 = cipher.encrypt(to_bytes("10000"), key, counting_bytes(12, 2));
    CHECK(e1 != e2);
    CHECK(e1.body != e2.body);
}

TEST_CASE("empty plaintext encrypts to an empty body and roundtrips") {
    XorStreamCipher cipher;
    CipherKey key = cipher.make_key(counting_bytes(16));
    CipherEnvelope env = cipher.encrypt({}, key, counting_bytes(12));
    CHECK(env.body.empty());
    DecryptionCounter counter;
    CHECK(cipher.decrypt(env, key, counter).empty());

    AesGcmCipher gcm;
    CipherKey gkey = gcm.make_key(counting_bytes(32));
    CipherEnvelope genv = gcm.encrypt({}, gkey, counting_bytes(12));
    CHECK(genv.body.size() == AesGcmCipher::kTagBytes);
    CHECK(gcm.decrypt(genv, gkey, counter).empty());
}

TEST_CASE("decryption counter counts every call") {
    XorStreamCipher cipher;
    CipherKey key = cipher.make_key(counting_bytes(16));
    CipherEnvelope env = cipher.encrypt(to_bytes("x"), key, counting_bytes(12));
    DecryptionCounter counter;
    CHECK(counter.count == 0);
    for (int i = 0; i < 3; ++i) (void)cipher.decrypt(env, key, counter);
    CHECK(counter.count == 3);
}

TEST_CASE("key and nonce widths are validated") {
    XorStreamCipher cipher;
    CHECK_THROWS_MATCHES(cipher.make_key(counting_bytes(15)), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::invalid_key; }));
    CipherKey key = cipher.make_key(counting_bytes(16));
    CHECK_THROWS_MATCHES(cipher.encrypt(to_bytes("m"), key, counting_bytes(11)), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::invalid_nonce; }));

    AesGcmCipher gcm;
    CipherKey short_key{counting_bytes(16)};
    DecryptionCounter counter;
    CipherEnvelope env{counting_bytes(12), counting_bytes(20)};
    CHECK_THROWS_MATCHES(gcm.decrypt(env, short_key, counter), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::invalid_key; }));
}

TEST_CASE("aes256-gcm detects tampering") {
    AesGcmCipher cipher;
    CipherKey key = cipher.make_key(counting_bytes(32));
    CipherEnvelope env = cipher.encrypt(to_bytes("salary=10000"), key, counting_bytes(12));
    env.body[0] ^= 0x01;
    DecryptionCounter counter;
    CHECK_THROWS_MATCHES(cipher.decrypt(env, key, counter), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::auth_failure; }));
}

TEST_CASE("key derivation is deterministic and label-separated") {
    AesGcmCipher cipher;
    Bytes master = to_bytes("correct horse battery staple");
    CipherKey a1 = cipher.derive_key(master, "main-table");
    CipherKey a2 = cipher.derive_key(master, "main-table");
    CipherKey b = cipher.derive_key(master, "search-table");
    CHECK(a1 == a2);
    CHECK(a1.material != b.material);
    CHECK(a1.material.size() == cipher.key_bytes());
}

TEST_CASE("configured decrypt delay is enforced") {
    XorStreamCipher cipher(std::chrono::microseconds{300});
    CipherKey key = cipher.make_key(counting_bytes(16));
    CipherEnvelope env = cipher.encrypt(to_bytes("d"), key, counting_bytes(12));
    DecryptionCounter counter;
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 10; ++i) (void)cipher.decrypt(env, key, counter);
    auto elapsed = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::steady_clock::now() - t0);
    CHECK(elapsed.count() >= 10 * 300);
}

TEST_CASE("nonce sequence never repeats within a run") {
    NonceSequence nonces(42);
    std::set<Bytes> seen;
    for (int i = 0; i < 10'000; ++i) {
        Bytes nonce = nonces.next();
        REQUIRE(nonce.size() == Cipher::kNonceBytes);
        CHECK(seen.insert(nonce).second);
    }
}

TEST_CASE("make_cipher resolves configured names") {
    CHECK(make_cipher("xor-stream")->name() == "xor-stream");
    CHECK(make_cipher("aes256-gcm")->name() == "aes256-gcm");
    CHECK_THROWS_AS(make_cipher("rot13"), Error);
}
