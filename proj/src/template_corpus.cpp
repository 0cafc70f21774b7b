#include "igaiva/template_corpus.hpp"

#include <cstdio>

#include "igaiva/error.hpp"
#include "igaiva/util.hpp"

namespace igaiva::corpus {

namespace {

std::vector<Topic> make_topics() {
    return {
        {"T1", "IT support and assistance",
         {{"soporte", "asistencia", "atencion"}, {"tecnico", "especialista", "operador"},
          {"incidencia", "averia", "fallo"}, {"portatil", "ordenador", "computadora"},
          {"instalacion", "configuracion", "puesta"}},
         {"equipo", "oficina", "puesto", "sede"}},
        {"T2", "Account activation and access issues",
         {{"activacion", "alta", "habilitacion"}, {"cuenta", "perfil", "usuario"},
          {"bloqueo", "bloqueada", "inhabilitada"}, {"permisos", "privilegios", "roles"},
          {"directorio", "ldap", "dominio"}},
         {"acceso", "sistema", "credenciales", "red"}},
        {"T3", "Password and device security",
         {{"contrasena", "clave", "password"}, {"caducada", "expirada", "vencida"},
          {"seguridad", "proteccion", "cifrado"}, {"movil", "telefono", "smartphone"},
          {"autenticacion", "verificacion", "token"}},
         {"dispositivo", "politica", "recuperar", "cambio"}},
        {"T4", "Printer issues and troubleshooting",
         {{"impresora", "impresoras", "plotter"}, {"toner", "cartucho", "tinta"},
          {"atasco", "atascado", "papel"}, {"escaner", "escanear", "digitalizar"},
          {"cola", "spooler", "trabajos"}},
         {"imprimir", "planta", "documento", "color"}},
        {"T5", "HP Dock connectivity issues",
         {{"dock", "docking", "replicador"}, {"monitor", "pantalla", "display"},
          {"usb", "thunderbolt", "conector"}, {"firmware", "controlador", "driver"},
          {"hp", "elitebook", "zbook"}},
         {"conexion", "cable", "puertos", "periferico"}},
        {"T6", "Employee documentation and errors",
         {{"nomina", "recibo", "salario"}, {"contrato", "expediente", "ficha"},
          {"certificado", "justificante", "constancia"}, {"vacaciones", "ausencia", "permiso"},
          {"portal", "intranet", "autoservicio"}},
         {"empleado", "documentacion", "rrhh", "datos"}},
        {"T7", "Access and login issues",
         {{"login", "inicio", "sesion"}, {"vpn", "remoto", "teletrabajo"},
          {"citrix", "escritorio", "virtual"}, {"sso", "federado", "okta"},
          {"pantallazo", "captura", "mensaje"}},
         {"entrar", "aplicacion", "error", "navegador"}},
        {"T8", "Opening and managing files/devices",
         {{"archivo", "fichero", "adjunto"}, {"carpeta", "directorio", "unidad"},
          {"pdf", "excel", "word"}, {"abrir", "abre", "apertura"},
          {"pendrive", "disco", "memoria"}},
         {"compartida", "guardar", "formato", "version"}},
        {"T9", "Mobile email and VPN setup",
         {{"outlook", "buzon", "correo"}, {"android", "iphone", "tablet"},
          {"sincronizacion", "sincronizar", "sincroniza"}, {"perfil", "mdm", "intune"},
          {"wifi", "datos", "cobertura"}},
         {"configurar", "movil", "app", "notificaciones"}},
        {"T10", "IT support and communication",
         {{"teams", "reunion", "videollamada"}, {"microfono", "camara", "auriculares"},
          {"chat", "mensajeria", "canal"}, {"extension", "centralita", "llamada"},
          {"grabacion", "audio", "sonido"}},
         {"comunicacion", "contacto", "aviso", "consulta"}},
        {"T11", "Error handling in RPG programming",
         {{"rpg", "as400", "iseries"}, {"programa", "rutina", "modulo"},
          {"compilacion", "compilar", "objeto"}, {"excepcion", "mch", "cpf"},
          {"batch", "lote", "spool"}},
         {"proceso", "codigo", "terminal", "pantalla"}},
        {"T12", "Email security and attachments",
         {{"phishing", "fraude", "suplantacion"}, {"spam", "basura", "cuarentena"},
          {"drive", "carpetas", "propietario"}, {"remitente", "destinatario", "dominio"},
          {"reenviar", "transferir", "traspasar"}},
         {"correo", "adjuntos", "baja", "enlace"}},
        {"T13", "Humanitarian aid for Ukraine",
         {{"ucrania", "ucraniano", "kiev"}, {"ayuda", "donacion", "aportacion"},
          {"refugiados", "desplazados", "acogida"}, {"humanitaria", "solidaria", "voluntariado"},
          {"envio", "recogida", "material"}},
         {"campana", "colaborar", "empresa", "iniciativa"}},
        {"T14", "Internet connectivity issues in offices",
         {{"internet", "navegacion", "conectividad"}, {"router", "switch", "punto"},
          {"lenta", "lentitud", "latencia"}, {"caida", "corte", "intermitente"},
          {"fibra", "linea", "proveedor"}},
         {"oficina", "red", "velocidad", "planta"}},
        {"T15", "Improving integration with Infojobs",
         {{"infojobs", "portal", "ofertas"}, {"candidatos", "curriculum", "cv"},
          {"integracion", "api", "conector"}, {"publicacion", "anuncio", "vacante"},
          {"seleccion", "reclutamiento", "proceso"}},
         {"rrhh", "sincronizar", "mejora", "datos"}},
    };
}

const std::vector<std::string>& openings() {
    static const std::vector<std::string> v{
        "Buenos dias", "Hola equipo", "Telefono: <phone number>", "Buenas tardes",
        "Estimado equipo", "Hola", "Saludos", "Buen dia"};
    return v;
}

const std::vector<std::string>& requests() {
    static const std::vector<std::string> v{
        "tengo un problema con", "solicita revisar", "necesito ayuda con",
        "no funciona", "reporta incidencia con", "pide soporte para", "falla"};
    return v;
}

const std::vector<std::string>& connectors() {
    static const std::vector<std::string> v{"afecta al", "relacionado con", "desde el", "junto con"};
    return v;
}

const std::vector<std::string>& closings() {
    static const std::vector<std::string> v{
        "gracias", "urgente", "saludos cordiales", "quedo atento", "un saludo", "muchas gracias"};
    return v;
}

template <class T>
const T& pick(Rng& rng, const std::vector<T>& items) {
    return items[static_cast<std::size_t>(rng.uniform_index(items.size()))];
}

}  // namespace

const std::vector<Topic>& builtin_topics() {
    static const std::vector<Topic> topics = make_topics();
    return topics;
}

std::vector<std::vector<std::string>> lexicon_synonym_groups() {
    std::vector<std::vector<std::string>> groups;
    for (const auto& t : builtin_topics()) {
        for (const auto& g : t.keyword_groups) groups.push_back(g);
    }
    groups.push_back({"problema", "inconveniente", "incidente"});
    groups.push_back({"revisar", "comprobar", "verificar"});
    groups.push_back({"gracias", "agradecido"});
    groups.push_back({"urgente", "prioritario"});
    groups.push_back({"ayuda", "apoyo"});
    return groups;
}

std::vector<std::size_t> reference_class_sizes() {
    return {8529, 11350, 4719, 1387, 2755, 1888, 1963, 1028, 1466, 1699, 471, 358, 180, 764, 543};
}

Dataset generate_template_corpus(const TemplateCorpusConfig& config) {
    const auto& topics = builtin_topics();
    if (config.num_classes < 2 || config.num_classes > topics.size())
        throw UsageError("template corpus supports 2 to " + std::to_string(topics.size()) + " classes");
    if (config.class_sizes.empty()) throw UsageError("class sizes must not be empty");
    if (config.class_sizes.size() != 1 && config.class_sizes.size() != config.num_classes)
        throw UsageError("class sizes must have one entry or one per class");

    const auto C = config.num_classes;
    std::vector<std::size_t> sizes(C);
    for (std::size_t c = 0; c < C; ++c)
        sizes[c] = config.class_sizes.size() == 1 ? config.class_sizes[0] : config.class_sizes[c];
    if (config.downsample) {
        bool found = false;
        for (std::size_t c = 0; c < C; ++c) {
            if (topics[c].label == config.downsample->first) {
                sizes[c] = std::min(sizes[c], config.downsample->second);
                found = true;
            }
        }
        if (!found) throw UsageError("downsample class '" + config.downsample->first + "' not generated");
    }

    std::vector<Message> messages;
    Rng rng(mix64(config.seed, fnv1a64("template-corpus")));
    std::size_t serial = 0;
    for (std::size_t c = 0; c < C; ++c) {
        const auto& topic = topics[c];
        const auto& prev = topics[(c + C - 1) % C];
        const auto& next = topics[(c + 1) % C];
        for (std::size_t i = 0; i < sizes[c]; ++i) {
            const auto& group = pick(rng, topic.keyword_groups);
            const auto& own = pick(rng, group);
            // Context drawn from this topic or a neighbour, which is what
            // makes neighbouring classes confusable.
            const auto ctx_from = rng.uniform_index(3);
            const auto& ctx_topic = ctx_from == 0 ? topic : (ctx_from == 1 ? prev : next);
            const auto& ctx1 = pick(rng, ctx_topic.shared_words);
            const auto& ctx2 = pick(rng, (rng.uniform_index(2) ? prev : next).shared_words);

            std::string text = pick(rng, openings());
            text += ", " + pick(rng, requests()) + " " + own;
            text += ", " + pick(rng, connectors()) + " " + ctx1 + " " + ctx2;
            if (rng.uniform_index(2)) text += ", " + pick(rng, closings());
            text += ".";

            char id[32];
            std::snprintf(id, sizeof(id), "m%06zu", ++serial);
            messages.push_back({id, std::move(text), topic.label, Origin::collected, std::nullopt});
        }
    }
    return Dataset(config.name, std::move(messages));
}

}  // namespace igaiva::corpus
