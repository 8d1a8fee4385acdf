#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "sealdb/bytes.hpp"
#include "sealdb/error.hpp"

namespace sealdb {

inline Bytes sha256(BytesView data) {
    Bytes digest(32);
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != 32)
        fail(Errc::internal, "SHA-256 failed");
    return digest;
}

/// Symmetric key material. Length is fixed by the cipher that minted it;
/// use Cipher::make_key / Cipher::derive_key to construct one validated.
struct CipherKey {
    Bytes material;

    friend bool operator==(const CipherKey&, const CipherKey&) = default;
};

/// A randomized ciphertext: per-message nonce plus cipher-defined body.
/// The unit of every stored secret. Serialized as hex(nonce) followed by
/// hex(body), 24 hex characters of nonce first.
struct CipherEnvelope {
    Bytes nonce;
    Bytes body;

    friend bool operator==(const CipherEnvelope&, const CipherEnvelope&) = default;

    [[nodiscard]] std::string to_hex() const {
        return hex_encode(nonce) + hex_encode(body);
    }

    static CipherEnvelope from_hex(std::string_view text, std::size_t position = Error::npos) {
        if (text.size() < 24 || text.size() % 2 != 0)
            fail(Errc::format_error, "envelope hex too short", position);
        CipherEnvelope env;
        env.nonce = hex_decode(text.substr(0, 24));
        env.body = hex_decode(text.substr(24));
        return env;
    }
};

/// Counts decrypt invocations within one execution context. Each
/// concurrent execution owns its own counter; they are never shared.
struct DecryptionCounter {
    std::uint64_t count = 0;
    std::string scope;
};

/// Symmetric cipher interface. Encryption is randomized through an
/// explicit caller-supplied nonce so equal plaintexts never produce equal
/// envelopes; implementations must be pure given (key, nonce) and safe to
/// call from any number of threads.
///
/// An optional artificial per-decryption delay (busy-wait, microsecond
/// resolution) makes small benchmarks decryption-dominated, mimicking the
/// cost profile of a heavyweight cipher over a large table.
class Cipher {
public:
    static constexpr std::size_t kNonceBytes = 12;

    explicit Cipher(std::chrono::microseconds decrypt_delay = std::chrono::microseconds{0})
        : decrypt_delay_(decrypt_delay) {}
    virtual ~Cipher() = default;

    Cipher(const Cipher&) = delete;
    Cipher& operator=(const Cipher&) = delete;

    [[nodiscard]] virtual std::string_view name() const = 0;
    [[nodiscard]] virtual std::size_t key_bytes() const = 0;
    /// True when decrypt detects tampering (and reports AuthFailure).
    [[nodiscard]] virtual bool authenticated() const = 0;

    [[nodiscard]] CipherKey make_key(BytesView material) const {
        if (material.size() != key_bytes())
            fail(Errc::invalid_key,
                 std::string(name()) + " needs " + std::to_string(key_bytes()) +
                     "-byte keys, got " + std::to_string(material.size()));
        return CipherKey{Bytes(material.begin(), material.end())};
    }

    /// Stretches a master secret into an independent labeled key:
    /// SHA-256(master || 0x00 || label || counter) blocks, truncated.
    [[nodiscard]] CipherKey derive_key(BytesView master, std::string_view label) const {
        Bytes material;
        std::uint8_t counter = 0;
        while (material.size() < key_bytes()) {
            Bytes input(master.begin(), master.end());
            input.push_back(0);
            input.insert(input.end(), label.begin(), label.end());
            input.push_back(counter++);
            Bytes block = sha256(input);
            material.insert(material.end(), block.begin(), block.end());
        }
        material.resize(key_bytes());
        return CipherKey{std::move(material)};
    }

    [[nodiscard]] CipherEnvelope encrypt(BytesView plaintext, const CipherKey& key,
                                         BytesView nonce) const {
        check_key(key);
        if (nonce.size() != kNonceBytes)
            fail(Errc::invalid_nonce, "nonce must be " + std::to_string(kNonceBytes) +
                                          " bytes, got " + std::to_string(nonce.size()));
        return CipherEnvelope{Bytes(nonce.begin(), nonce.end()), do_encrypt(plaintext, key, nonce)};
    }

    /// Recovers the plaintext and bumps the caller's counter by exactly one.
    [[nodiscard]] Bytes decrypt(const CipherEnvelope& envelope, const CipherKey& key,
                                DecryptionCounter& counter) const {
        check_key(key);
        if (envelope.nonce.size() != kNonceBytes)
            fail(Errc::invalid_nonce, "envelope nonce has wrong width");
        counter.count += 1;
        if (decrypt_delay_.count() > 0) spin_wait(decrypt_delay_);
        return do_decrypt(envelope.body, key, envelope.nonce);
    }

    [[nodiscard]] std::chrono::microseconds decrypt_delay() const { return decrypt_delay_; }

private:
    void check_key(const CipherKey& key) const {
        if (key.material.size() != key_bytes())
            fail(Errc::invalid_key, std::string(name()) + ": wrong key length");
    }

    // sleep_for has ~50us granularity on common kernels, far too coarse
    // for per-call delays of a few microseconds.
    static void spin_wait(std::chrono::microseconds delay) {
        auto deadline = std::chrono::steady_clock::now() + delay;
        while (std::chrono::steady_clock::now() < deadline) {
        }
    }

    [[nodiscard]] virtual Bytes do_encrypt(BytesView plaintext, const CipherKey& key,
                                           BytesView nonce) const = 0;
    [[nodiscard]] virtual Bytes do_decrypt(BytesView body, const CipherKey& key,
                                           BytesView nonce) const = 0;

    std::chrono::microseconds decrypt_delay_;
};

/// Deterministic keyed XOR stream for reproducible tests. NOT SECURE:
/// malleable, unauthenticated, and the keystream derivation is ad hoc.
/// Keystream block i = SHA-256(key || nonce || be64(i)); the body is the
/// plaintext XORed with the stream, so it has the plaintext's length.
class XorStreamCipher final : public Cipher {
public:
    using Cipher::Cipher;

    [[nodiscard]] std::string_view name() const override { return "xor-stream"; }
    [[nodiscard]] std::size_t key_bytes() const override { return 16; }
    [[nodiscard]] bool authenticated() const override { return false; }

private:
    static Bytes apply_stream(BytesView data, const CipherKey& key, BytesView nonce) {
        Bytes out(data.begin(), data.end());
        Bytes block_input(key.material.begin(), key.material.end());
        block_input.insert(block_input.end(), nonce.begin(), nonce.end());
        const std::size_t counter_at = block_input.size();
        block_input.resize(counter_at + 8);
        for (std::size_t offset = 0, block = 0; offset < out.size(); offset += 32, ++block) {
            auto counter = be64_encode(block);
            std::copy(counter.begin(), counter.end(), block_input.begin() + static_cast<std::ptrdiff_t>(counter_at));
            Bytes stream = sha256(block_input);
            for (std::size_t i = 0; i < 32 && offset + i < out.size(); ++i)
                out[offset + i] ^= stream[i];
        }
        return out;
    }

    [[nodiscard]] Bytes do_encrypt(BytesView plaintext, const CipherKey& key,
                                   BytesView nonce) const override {
        return apply_stream(plaintext, key, nonce);
    }

    [[nodiscard]] Bytes do_decrypt(BytesView body, const CipherKey& key,
                                   BytesView nonce) const override {
        return apply_stream(body, key, nonce);
    }
};

/// AES-256-GCM via OpenSSL. Body layout: ciphertext || 16-byte tag.
class AesGcmCipher final : public Cipher {
public:
    using Cipher::Cipher;

    static constexpr std::size_t kTagBytes = 16;

    [[nodiscard]] std::string_view name() const override { return "aes256-gcm"; }
    [[nodiscard]] std::size_t key_bytes() const override { return 32; }
    [[nodiscard]] bool authenticated() const override { return true; }

private:
    struct CtxDeleter {
        void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
    };
    using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

    [[nodiscard]] Bytes do_encrypt(BytesView plaintext, const CipherKey& key,
                                   BytesView nonce) const override {
        CtxPtr ctx(EVP_CIPHER_CTX_new());
        if (!ctx) fail(Errc::internal, "EVP context allocation failed");
        if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceBytes, nullptr) != 1 ||
            EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.material.data(), nonce.data()) != 1)
            fail(Errc::internal, "AES-GCM encrypt init failed");
        Bytes body(plaintext.size() + kTagBytes);
        int len = 0;
        if (!plaintext.empty() &&
            EVP_EncryptUpdate(ctx.get(), body.data(), &len, plaintext.data(),
                              static_cast<int>(plaintext.size())) != 1)
            fail(Errc::internal, "AES-GCM encrypt failed");
        int total = len;
        if (EVP_EncryptFinal_ex(ctx.get(), body.data() + total, &len) != 1)
            fail(Errc::internal, "AES-GCM encrypt finalization failed");
        total += len;
        if (static_cast<std::size_t>(total) != plaintext.size())
            fail(Errc::internal, "AES-GCM produced unexpected length");
        if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagBytes,
                                body.data() + total) != 1)
            fail(Errc::internal, "AES-GCM tag extraction failed");
        return body;
    }

    [[nodiscard]] Bytes do_decrypt(BytesView body, const CipherKey& key,
                                   BytesView nonce) const override {
        if (body.size() < kTagBytes)
            fail(Errc::auth_failure, "ciphertext shorter than the authentication tag");
        const std::size_t ct_len = body.size() - kTagBytes;
        CtxPtr ctx(EVP_CIPHER_CTX_new());
        if (!ctx) fail(Errc::internal, "EVP context allocation failed");
        if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceBytes, nullptr) != 1 ||
            EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.material.data(), nonce.data()) != 1)
            fail(Errc::internal, "AES-GCM decrypt init failed");
        Bytes plaintext(ct_len);
        int len = 0;
        if (ct_len > 0 &&
            EVP_DecryptUpdate(ctx.get(), plaintext.data(), &len, body.data(),
                              static_cast<int>(ct_len)) != 1)
            fail(Errc::internal, "AES-GCM decrypt failed");
        int total = len;
        Bytes tag(body.begin() + static_cast<std::ptrdiff_t>(ct_len), body.end());
        if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagBytes, tag.data()) != 1)
            fail(Errc::internal, "AES-GCM tag set failed");
        if (EVP_DecryptFinal_ex(ctx.get(), plaintext.data() + total, &len) != 1)
            fail(Errc::auth_failure, "ciphertext failed authentication");
        total += len;
        plaintext.resize(static_cast<std::size_t>(total));
        return plaintext;
    }
};

inline std::unique_ptr<Cipher> make_cipher(std::string_view name,
                                           std::chrono::microseconds decrypt_delay =
                                               std::chrono::microseconds{0}) {
    if (name == "xor-stream") return std::make_unique<XorStreamCipher>(decrypt_delay);
    if (name == "aes256-gcm") return std::make_unique<AesGcmCipher>(decrypt_delay);
    fail(Errc::invalid_config, "unknown cipher '" + std::string(name) + "'");
}

/// Unique 12-byte nonces for one protect run: a seeded 4-byte prefix
/// followed by a masked 64-bit counter. The mask keeps uniqueness (XOR
/// with a constant is a bijection) while leaving no small-integer
/// structure in the emitted bytes. The protect pipeline still
/// cross-checks every envelope it emits.
class NonceSequence {
public:
    explicit NonceSequence(std::uint64_t seed) {
        SplitMix64 rng(seed);
        std::uint64_t prefix = rng.next();
        for (int i = 0; i < 4; ++i)
            prefix_[static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>(prefix >> (8 * i));
        mask_ = rng.next();
    }

    [[nodiscard]] Bytes next() {
        Bytes nonce(prefix_.begin(), prefix_.end());
        auto counter = be64_encode(counter_++ ^ mask_);
        nonce.insert(nonce.end(), counter.begin(), counter.end());
        return nonce;
    }

private:
    std::array<std::uint8_t, 4> prefix_{};
    std::uint64_t mask_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace sealdb
